// Shared fixture builders for the unit and acceptance suites: random PSD
// matrices, random simplex points, explicit feature-space constructions that
// the kernelized code paths are checked against.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/matrix.hpp"
#include "pmi/pmi.hpp"

namespace pmi::testutil {

// K = scale * AᵀA / m with A uniform in [-1,1]: symmetric PSD, entries O(scale/3).
inline Matrix random_psd(std::mt19937_64& rng, std::size_t m, double scale) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> a(m, std::vector<double>(m));
    for (auto& row : a)
        for (auto& v : row) v = u(rng);
    Matrix k(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            double dot = 0.0;
            for (std::size_t r = 0; r < m; ++r) dot += a[r][i] * a[r][j];
            double v = scale * dot / static_cast<double>(m);
            k(i, j) = v;
            k(j, i) = v;
        }
    return k;
}

// uniform draw from the probability simplex (normalized exponentials)
inline std::vector<double> random_simplex_point(std::mt19937_64& rng, std::size_t k) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(k);
    double sum = 0.0;
    for (auto& x : v) {
        x = e(rng);
        sum += x;
    }
    for (auto& x : v) x /= sum;
    return v;
}

// b = Σ_k w_k · bag.instances[k]
inline std::vector<double> form_virtual(const Bag& bag, const std::vector<double>& w) {
    std::vector<double> b(bag.instances[0].features.size(), 0.0);
    for (std::size_t k = 0; k < bag.size(); ++k)
        for (std::size_t d = 0; d < b.size(); ++d) b[d] += w[k] * bag.instances[k].features[d];
    return b;
}

// Σ_i ‖B_iλ_i − mean‖² computed directly in feature space
inline double explicit_variance(const Dataset& ds,
                                const std::vector<std::vector<double>>& lambda) {
    std::vector<std::vector<double>> virtuals;
    for (std::size_t i = 0; i < ds.bags.size(); ++i)
        virtuals.push_back(form_virtual(ds.bags[i], lambda[i]));
    std::vector<double> mean(ds.dimension, 0.0);
    for (const auto& b : virtuals)
        for (std::size_t d = 0; d < ds.dimension; ++d) mean[d] += b[d];
    for (auto& v : mean) v /= static_cast<double>(virtuals.size());
    double total = 0.0;
    for (const auto& b : virtuals)
        for (std::size_t d = 0; d < ds.dimension; ++d) {
            double diff = b[d] - mean[d];
            total += diff * diff;
        }
    return total;
}

// random positive-bag dataset: bag sizes in [min_sz, max_sz], features U[0,1]^d
inline Dataset random_bags(std::mt19937_64& rng, std::size_t n_bags, std::size_t min_sz,
                           std::size_t max_sz, std::size_t dim) {
    std::uniform_int_distribution<std::size_t> size_dist(min_sz, max_sz);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset ds;
    ds.dimension = dim;
    for (std::size_t i = 0; i < n_bags; ++i) {
        Bag bag;
        bag.bag_id = "b" + std::to_string(i + 1);
        bag.bag_label = Label::positive;
        std::size_t sz = size_dist(rng);
        for (std::size_t j = 0; j < sz; ++j) {
            Instance inst;
            inst.instance_label = Label::positive;
            for (std::size_t d = 0; d < dim; ++d) inst.features.push_back(u(rng));
            bag.instances.push_back(std::move(inst));
        }
        ds.bags.push_back(std::move(bag));
    }
    return ds;
}

// Answers negative regardless of the instance; drives the query loop to its
// worst case.
class AlwaysNegativeOracle : public LabelOracle {
public:
    bool available() const override { return true; }
    Label query(const Bag&, std::size_t) override { return Label::negative; }
};

}  // namespace pmi::testutil
