// Kernel families (rbf / linear / polynomial), Gram matrices over bagged
// datasets, the induced kernel between per-bag convex combinations, and
// weighted-expansion evaluation for decision functions.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/format.hpp"
#include "pmi/matrix.hpp"

namespace pmi {

// Textual forms: "rbf:gamma=<float>", "linear", "poly:degree=<int>,coef=<float>".
struct KernelSpec {
    enum class Family { rbf, linear, polynomial };

    Family family = Family::rbf;
    double gamma = 1.0;   // rbf only, > 0
    int degree = 2;       // polynomial only, >= 1
    double coef = 0.0;    // polynomial only

    static KernelSpec rbf(double gamma) {
        if (!(gamma > 0.0)) throw std::invalid_argument("rbf gamma must be positive");
        KernelSpec s;
        s.family = Family::rbf;
        s.gamma = gamma;
        return s;
    }
    static KernelSpec linear() {
        KernelSpec s;
        s.family = Family::linear;
        return s;
    }
    static KernelSpec polynomial(int degree, double coef) {
        if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
        KernelSpec s;
        s.family = Family::polynomial;
        s.degree = degree;
        s.coef = coef;
        return s;
    }

    // scale-free default: gamma = 1/d
    static KernelSpec default_for_dimension(std::size_t d) {
        return rbf(1.0 / static_cast<double>(d == 0 ? 1 : d));
    }

    static KernelSpec parse(std::string_view text) {
        std::string_view head = text;
        std::string_view args;
        if (auto colon = text.find(':'); colon != std::string_view::npos) {
            head = text.substr(0, colon);
            args = text.substr(colon + 1);
        }

        auto kv = [&](std::string_view key) -> std::string_view {
            for (auto part : split(args, ',')) {
                part = trim(part);
                auto eq = part.find('=');
                if (eq == std::string_view::npos)
                    throw std::invalid_argument("kernel argument '" + std::string(part) +
                                                "' is not key=value");
                if (trim(part.substr(0, eq)) == key) return trim(part.substr(eq + 1));
            }
            return {};
        };

        if (head == "linear") {
            if (!args.empty()) throw std::invalid_argument("linear kernel takes no arguments");
            return linear();
        }
        if (head == "rbf") {
            auto g = kv("gamma");
            if (g.empty()) throw std::invalid_argument("rbf kernel requires gamma=<float>");
            double gamma;
            if (!parse_double(g, gamma) || !(gamma > 0.0))
                throw std::invalid_argument("rbf gamma must be a positive number, got '" +
                                            std::string(g) + "'");
            return rbf(gamma);
        }
        if (head == "poly") {
            auto d = kv("degree");
            if (d.empty()) throw std::invalid_argument("poly kernel requires degree=<int>");
            std::size_t degree;
            if (!parse_size(d, degree) || degree < 1)
                throw std::invalid_argument("poly degree must be a positive integer, got '" +
                                            std::string(d) + "'");
            double coef = 0.0;
            if (auto c = kv("coef"); !c.empty()) {
                if (!parse_double(c, coef))
                    throw std::invalid_argument("poly coef must be a number, got '" +
                                                std::string(c) + "'");
            }
            return polynomial(static_cast<int>(degree), coef);
        }
        throw std::invalid_argument("unknown kernel '" + std::string(head) +
                                    "' (expected rbf:gamma=<float>, linear, or "
                                    "poly:degree=<int>,coef=<float>)");
    }

    std::string str() const {
        switch (family) {
            case Family::rbf: return "rbf:gamma=" + format_double(gamma);
            case Family::linear: return "linear";
            default:
                return "poly:degree=" + std::to_string(degree) + ",coef=" + format_double(coef);
        }
    }
};

inline double kernel_eval(const KernelSpec& spec, const std::vector<double>& x,
                          const std::vector<double>& y) {
    if (x.size() != y.size())
        throw DataError("kernel_eval: dimension mismatch (" + std::to_string(x.size()) +
                        " vs " + std::to_string(y.size()) + ")");
    switch (spec.family) {
        case KernelSpec::Family::rbf: {
            double d2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                double d = x[i] - y[i];
                d2 += d * d;
            }
            return std::exp(-spec.gamma * d2);
        }
        case KernelSpec::Family::linear: {
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
            return dot;
        }
        default: {
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
            return std::pow(dot + spec.coef, spec.degree);
        }
    }
}

inline double kernel_eval(const KernelSpec& spec, const Instance& x, const Instance& y) {
    return kernel_eval(spec, x.features, y.features);
}

// Gram matrix over all instances, flat order = bag order x instance order.
// bag_offset has N+1 entries; instance (i,j) sits at flat index bag_offset[i]+j.
struct GramMatrix {
    Matrix k{0};
    std::vector<std::size_t> bag_offset;

    std::size_t bag_count() const { return bag_offset.empty() ? 0 : bag_offset.size() - 1; }
    std::size_t bag_size(std::size_t i) const { return bag_offset[i + 1] - bag_offset[i]; }
    std::size_t flat(std::size_t bag, std::size_t pos) const { return bag_offset[bag] + pos; }
};

inline GramMatrix gram_matrix(const KernelSpec& spec, const Dataset& ds) {
    GramMatrix g;
    g.bag_offset.reserve(ds.bags.size() + 1);
    g.bag_offset.push_back(0);
    std::vector<const Instance*> flat;
    for (const auto& bag : ds.bags) {
        for (const auto& inst : bag.instances) flat.push_back(&inst);
        g.bag_offset.push_back(flat.size());
    }

    g.k = Matrix(flat.size());
    for (std::size_t p = 0; p < flat.size(); ++p) {
        g.k(p, p) = kernel_eval(spec, *flat[p], *flat[p]);
        for (std::size_t q = p + 1; q < flat.size(); ++q) {
            double v = kernel_eval(spec, *flat[p], *flat[q]);
            g.k(p, q) = v;
            g.k(q, p) = v;
        }
    }
    return g;
}

// Kernel between per-bag convex combinations b_i = sum_k w_ik x_ik without
// forming them: entry (i,j) = sum_k sum_r w_ik w_jr K[ik][jr].
inline Matrix virtual_kernel(const GramMatrix& g, const std::vector<std::vector<double>>& weights) {
    const std::size_t n_bags = g.bag_count();
    if (weights.size() != n_bags)
        throw DataError("virtual_kernel: weight blocks (" + std::to_string(weights.size()) +
                        ") != bags (" + std::to_string(n_bags) + ")");
    for (std::size_t i = 0; i < n_bags; ++i)
        if (weights[i].size() != g.bag_size(i))
            throw DataError("virtual_kernel: weight block " + std::to_string(i) +
                            " size mismatch");

    Matrix vk(n_bags);
    for (std::size_t i = 0; i < n_bags; ++i) {
        for (std::size_t j = i; j < n_bags; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < weights[i].size(); ++k) {
                double wik = weights[i][k];
                if (wik == 0.0) continue;
                const std::size_t row = g.flat(i, k);
                double inner = 0.0;
                for (std::size_t r = 0; r < weights[j].size(); ++r)
                    inner += weights[j][r] * g.k(row, g.flat(j, r));
                sum += wik * inner;
            }
            vk(i, j) = sum;
            vk(j, i) = sum;
        }
    }
    return vk;
}

// Decision-function expansion: a flat list of (weight, point) pairs.
struct WeightedPoint {
    double weight = 0.0;
    std::vector<double> point;
};
using Expansion = std::vector<WeightedPoint>;

inline double cross_kernel_row(const KernelSpec& spec, const std::vector<double>& x,
                               const Expansion& expansion) {
    double sum = 0.0;
    for (const auto& wp : expansion) sum += wp.weight * kernel_eval(spec, x, wp.point);
    return sum;
}

}  // namespace pmi
