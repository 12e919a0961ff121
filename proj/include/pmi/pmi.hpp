// The trainer proper: per-bag weight fitting, one-class training over the
// induced virtual points, representative-based retraining when the bag-level
// and virtual-point labels disagree, label querying, instance removal, and
// the outer active-learning loop, plus the checkers for the two guaranteed
// properties (outlier-bag fraction and maximum query count).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/kernel.hpp"
#include "pmi/qp.hpp"

namespace pmi {

struct PmiConfig {
    double qp_tol = 1e-6;
    std::size_t max_iter_factor = 100;  // max_iter = factor * problem size

    // Box bound used by the 2N-point retraining step. theorem_consistent caps
    // each coordinate at 1/(nu*N) so at most nu*N of the 2N points can sit at
    // the bound; literal halves the cap.
    enum class RetrainBound { theorem_consistent, literal };
    RetrainBound retrain_bound = RetrainBound::theorem_consistent;
};

// Per-bag convex-combination weights, one simplex block per bag.
struct LambdaSolution {
    std::vector<std::vector<double>> weights;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

enum class BagRole { support, outlier, interior };

inline std::string_view bag_role_token(BagRole r) {
    switch (r) {
        case BagRole::support: return "support";
        case BagRole::outlier: return "outlier";
        default: return "interior";
    }
}

struct OneClassModel {
    std::vector<double> alpha;  // length N, or 2N after retraining
    double rho = 0.0;
    KernelSpec kernel;
    Expansion expansion;
    double upper = 0.0;
    double nu = 0.0;
    std::size_t dimension = 0;
    std::vector<BagRole> bag_roles;
    std::vector<double> training_decision;  // decision value at each training point
    bool retrained = false;
    bool converged = false;
    std::size_t qp_iterations = 0;
    double qp_residual = 0.0;
};

// ---------------------------------------------------------------------------
// Oracles

class LabelOracle {
public:
    virtual ~LabelOracle() = default;
    virtual bool available() const = 0;
    // must answer positive or negative for the addressed instance
    virtual Label query(const Bag& bag, std::size_t instance_index) = 0;
};

// Answers from the instance-level ground truth carried by the dataset.
class GroundTruthOracle : public LabelOracle {
public:
    bool available() const override { return true; }
    Label query(const Bag& bag, std::size_t instance_index) override {
        if (instance_index >= bag.size())
            throw DataError("oracle query: instance index out of range");
        Label l = bag.instances[instance_index].instance_label;
        if (l == Label::unknown)
            throw DataError("oracle query: bag '" + bag.bag_id + "' instance " +
                            std::to_string(instance_index) + " has no ground-truth label");
        return l;
    }
};

// Prompts a human on the attached streams; accepts p/n, re-asks otherwise.
class InteractiveOracle : public LabelOracle {
public:
    InteractiveOracle(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    bool available() const override { return static_cast<bool>(in_); }

    Label query(const Bag& bag, std::size_t instance_index) override {
        std::string reply;
        for (;;) {
            out_ << "label instance " << bag.bag_id << "/" << instance_index << " [p/n]: "
                 << std::flush;
            if (!std::getline(in_, reply))
                throw DataError("interactive oracle: input closed before an answer was given");
            auto token = trim(reply);
            if (token == "p" || token == "P" || token == "+1") return Label::positive;
            if (token == "n" || token == "N" || token == "-1") return Label::negative;
            out_ << "please answer p or n\n";
        }
    }

private:
    std::istream& in_;
    std::ostream& out_;
};

// ---------------------------------------------------------------------------
// Lambda fitting

// Weight objective matrix: blockdiag(K) − (1/N)·K. Minimizing λᵀQλ over the
// per-bag simplices minimizes the spread of the induced per-bag points around
// their mean (exactly zero when one bag, where any weights are optimal).
inline Matrix build_lambda_q(const GramMatrix& g) {
    const std::size_t m = g.k.size();
    const std::size_t n_bags = g.bag_count();
    if (n_bags == 0) throw DataError("build_lambda_q: no bags");
    if (g.bag_offset.back() != m) throw DataError("build_lambda_q: offsets do not match matrix");

    std::vector<std::size_t> bag_of(m);
    for (std::size_t i = 0; i < n_bags; ++i)
        for (std::size_t p = g.bag_offset[i]; p < g.bag_offset[i + 1]; ++p) bag_of[p] = i;

    const double inv_n = 1.0 / static_cast<double>(n_bags);
    Matrix q(m);
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t r = 0; r < m; ++r) {
            double v = g.k(p, r);
            q(p, r) = bag_of[p] == bag_of[r] ? v - v * inv_n : -v * inv_n;
        }
    return q;
}

inline LambdaSolution fit_lambda(const GramMatrix& g, double tol = 1e-6,
                                 std::size_t max_iter = 0) {
    BlockSimplexQP problem;
    problem.q = build_lambda_q(g);
    problem.blocks.resize(g.bag_count());
    for (std::size_t i = 0; i < g.bag_count(); ++i)
        for (std::size_t p = g.bag_offset[i]; p < g.bag_offset[i + 1]; ++p)
            problem.blocks[i].push_back(p);

    if (max_iter == 0) max_iter = 100 * std::max<std::size_t>(g.k.size(), 1);
    QPSolution qs = solve_block_simplex(problem, tol, max_iter);

    LambdaSolution out;
    out.objective = qs.objective;
    out.iterations = qs.iterations;
    out.converged = qs.converged;
    out.weights.resize(g.bag_count());
    for (std::size_t i = 0; i < g.bag_count(); ++i)
        for (std::size_t p = g.bag_offset[i]; p < g.bag_offset[i + 1]; ++p)
            out.weights[i].push_back(qs.variables[p]);
    return out;
}

inline LambdaSolution fit_lambda(const Dataset& ds, const KernelSpec& kernel, double tol = 1e-6,
                                 std::size_t max_iter = 0) {
    return fit_lambda(gram_matrix(kernel, ds), tol, max_iter);
}

// ---------------------------------------------------------------------------
// One-class training over virtual points

namespace detail {

inline BagRole role_for(double a, double upper) {
    const double tol_bound = 1e-8 * upper;
    if (a >= upper - tol_bound) return BagRole::outlier;
    if (a > tol_bound) return BagRole::support;
    return BagRole::interior;
}

inline Expansion flatten_virtual(const Dataset& ds, const LambdaSolution& lambda,
                                 const std::vector<double>& alpha) {
    Expansion e;
    for (std::size_t i = 0; i < ds.bags.size(); ++i)
        for (std::size_t k = 0; k < ds.bags[i].size(); ++k)
            e.push_back({alpha[i] * lambda.weights[i][k], ds.bags[i].instances[k].features});
    return e;
}

}  // namespace detail

inline OneClassModel train_once(const Dataset& ds, const GramMatrix& g,
                                const LambdaSolution& lambda, const KernelSpec& kernel, double nu,
                                const PmiConfig& cfg = {}) {
    if (!(nu > 0.0 && nu <= 1.0)) throw DataError("nu must lie in (0, 1]");
    const std::size_t n_bags = ds.bags.size();
    if (n_bags == 0) throw DataError("train_once: empty dataset");
    if (lambda.weights.size() != n_bags) throw DataError("train_once: lambda/bag mismatch");

    BoxSumQP problem;
    problem.k = virtual_kernel(g, lambda.weights);
    problem.upper = 1.0 / (nu * static_cast<double>(n_bags));
    QPSolution qs =
        solve_box_sum(problem, cfg.qp_tol, cfg.max_iter_factor * std::max<std::size_t>(n_bags, 1));

    OneClassModel model;
    model.alpha = qs.variables;
    model.upper = problem.upper;
    model.nu = nu;
    model.kernel = kernel;
    model.dimension = ds.dimension;
    model.rho = recover_rho(problem.k, qs.variables, problem.upper, 1e-8 * problem.upper);
    model.expansion = detail::flatten_virtual(ds, lambda, qs.variables);
    model.converged = qs.converged;
    model.qp_iterations = qs.iterations;
    model.qp_residual = qs.kkt_residual;

    std::vector<double> kv = problem.k.multiply(qs.variables);
    model.training_decision.resize(n_bags);
    model.bag_roles.resize(n_bags);
    for (std::size_t i = 0; i < n_bags; ++i) {
        model.training_decision[i] = kv[i] - model.rho;
        model.bag_roles[i] = detail::role_for(qs.variables[i], problem.upper);
    }
    return model;
}

inline OneClassModel train_once(const Dataset& ds, const LambdaSolution& lambda,
                                const KernelSpec& kernel, double nu, const PmiConfig& cfg = {}) {
    return train_once(ds, gram_matrix(kernel, ds), lambda, kernel, nu, cfg);
}

// ---------------------------------------------------------------------------
// Decision functions

inline double decision_value(const OneClassModel& model, const std::vector<double>& x) {
    if (x.size() != model.dimension)
        throw DataError("decision_value: probe dimension " + std::to_string(x.size()) +
                        " != model dimension " + std::to_string(model.dimension));
    return cross_kernel_row(model.kernel, x, model.expansion) - model.rho;
}

inline double decision_value(const OneClassModel& model, const Instance& x) {
    return decision_value(model, x.features);
}

struct BagPrediction {
    int label = 1;  // +1 or -1
    std::size_t witness_index = 0;
    double witness_value = 0.0;
};

// Bag label = sign of the best instance-level decision value; sign(0) = +1.
inline BagPrediction classify_bag(const OneClassModel& model, const Bag& bag) {
    if (bag.instances.empty()) throw DataError("classify_bag: empty bag");
    BagPrediction p;
    p.witness_value = decision_value(model, bag.instances[0]);
    for (std::size_t j = 1; j < bag.size(); ++j) {
        double v = decision_value(model, bag.instances[j]);
        if (v > p.witness_value) {
            p.witness_value = v;
            p.witness_index = j;
        }
    }
    p.label = p.witness_value >= 0.0 ? 1 : -1;
    return p;
}

// ---------------------------------------------------------------------------
// Retraining: the virtual point of a non-outlier bag claims the bag is inside
// the boundary, but no actual member instance is. Re-train over the 2N-point
// set {virtual points} ∪ {best member per bag} to pull the boundary onto real
// instances.

inline bool needs_retrain(const OneClassModel& model, const Dataset& ds) {
    if (model.alpha.size() != ds.bags.size())
        throw DataError("needs_retrain: model was not trained on this dataset");
    const double tol_bound = 1e-8 * model.upper;
    for (std::size_t i = 0; i < ds.bags.size(); ++i)
        if (model.alpha[i] < model.upper - tol_bound && classify_bag(model, ds.bags[i]).label < 0)
            return true;
    return false;
}

// One instance index per bag, maximizing the decision value (lowest index on
// ties).
inline std::vector<std::size_t> select_representatives(const OneClassModel& model,
                                                       const Dataset& ds) {
    std::vector<std::size_t> reps;
    reps.reserve(ds.bags.size());
    for (const auto& bag : ds.bags) reps.push_back(classify_bag(model, bag).witness_index);
    return reps;
}

inline OneClassModel retrain(const Dataset& ds, const GramMatrix& g, const LambdaSolution& lambda,
                             const std::vector<std::size_t>& representatives,
                             const KernelSpec& kernel, double nu, const PmiConfig& cfg = {}) {
    if (!(nu > 0.0 && nu <= 1.0)) throw DataError("nu must lie in (0, 1]");
    const std::size_t n_bags = ds.bags.size();
    if (representatives.size() != n_bags) throw DataError("retrain: representative count mismatch");
    for (std::size_t i = 0; i < n_bags; ++i)
        if (representatives[i] >= ds.bags[i].size())
            throw DataError("retrain: representative index out of range");

    // 2N-point kernel: virtual-virtual via the weight-squeezed Gram entries,
    // virtual-raw via weighted rows, raw-raw directly.
    Matrix vk = virtual_kernel(g, lambda.weights);
    const std::size_t m = 2 * n_bags;
    BoxSumQP problem;
    problem.k = Matrix(m);
    for (std::size_t i = 0; i < n_bags; ++i)
        for (std::size_t j = 0; j < n_bags; ++j) problem.k(i, j) = vk(i, j);
    for (std::size_t i = 0; i < n_bags; ++i) {
        const std::size_t rep_i = g.flat(i, representatives[i]);
        for (std::size_t j = 0; j < n_bags; ++j) {
            double cross = 0.0;  // ker(b_j, B_i[rep])
            for (std::size_t r = 0; r < lambda.weights[j].size(); ++r)
                cross += lambda.weights[j][r] * g.k(g.flat(j, r), rep_i);
            problem.k(n_bags + i, j) = cross;
            problem.k(j, n_bags + i) = cross;
        }
        for (std::size_t j = 0; j <= i; ++j) {
            double raw = g.k(rep_i, g.flat(j, representatives[j]));
            problem.k(n_bags + i, n_bags + j) = raw;
            problem.k(n_bags + j, n_bags + i) = raw;
        }
    }

    problem.upper = cfg.retrain_bound == PmiConfig::RetrainBound::literal
                        ? 1.0 / (2.0 * nu * static_cast<double>(n_bags))
                        : 1.0 / (nu * static_cast<double>(n_bags));
    QPSolution qs = solve_box_sum(problem, cfg.qp_tol, cfg.max_iter_factor * m);

    OneClassModel model;
    model.alpha = qs.variables;
    model.upper = problem.upper;
    model.nu = nu;
    model.kernel = kernel;
    model.dimension = ds.dimension;
    model.retrained = true;
    model.rho = recover_rho(problem.k, qs.variables, problem.upper, 1e-8 * problem.upper);
    model.converged = qs.converged;
    model.qp_iterations = qs.iterations;
    model.qp_residual = qs.kkt_residual;

    model.expansion = detail::flatten_virtual(ds, lambda, qs.variables);  // first N coords
    for (std::size_t i = 0; i < n_bags; ++i)
        model.expansion.push_back(
            {qs.variables[n_bags + i], ds.bags[i].instances[representatives[i]].features});

    std::vector<double> kv = problem.k.multiply(qs.variables);
    model.training_decision.resize(m);
    for (std::size_t p = 0; p < m; ++p) model.training_decision[p] = kv[p] - model.rho;

    // a bag's role tracks its representative instance's dual coordinate
    model.bag_roles.resize(n_bags);
    for (std::size_t i = 0; i < n_bags; ++i)
        model.bag_roles[i] = detail::role_for(qs.variables[n_bags + i], problem.upper);
    return model;
}

// ---------------------------------------------------------------------------
// Query selection and instance removal

struct QueryChoice {
    std::size_t bag = 0;
    std::size_t instance = 0;
    double value = 0.0;
};

// The globally best-scoring instance among those currently labeled positive
// (decision value ≥ 0); none when every instance scores negative.
inline std::optional<QueryChoice> select_query(const OneClassModel& model, const Dataset& ds) {
    std::optional<QueryChoice> best;
    for (std::size_t i = 0; i < ds.bags.size(); ++i)
        for (std::size_t j = 0; j < ds.bags[i].size(); ++j) {
            double v = decision_value(model, ds.bags[i].instances[j]);
            if (v >= 0.0 && (!best || v > best->value)) best = QueryChoice{i, j, v};
        }
    return best;
}

struct RemovalResult {
    Dataset dataset;
    std::size_t removed = 0;
    bool emptied_bag = false;
};

// Drops every instance the model labels positive. A bag whose instances are
// all removed is dropped from the result and flagged (the caller treats the
// flag as a terminal condition).
inline RemovalResult remove_positive_labeled(const Dataset& ds, const OneClassModel& model) {
    RemovalResult out;
    out.dataset.dimension = ds.dimension;
    for (const auto& bag : ds.bags) {
        Bag kept;
        kept.bag_id = bag.bag_id;
        kept.bag_label = bag.bag_label;
        for (const auto& inst : bag.instances) {
            if (decision_value(model, inst) >= 0.0)
                ++out.removed;
            else
                kept.instances.push_back(inst);
        }
        if (kept.instances.empty())
            out.emptied_bag = true;
        else
            out.dataset.bags.push_back(std::move(kept));
    }
    return out;
}

// ---------------------------------------------------------------------------
// The active-learning loop

enum class TerminationReason {
    no_oracle,
    all_instances_positive_bag,
    positive_query,
    empty_bag,
    no_queryable_instance
};

inline std::string_view termination_token(TerminationReason r) {
    switch (r) {
        case TerminationReason::no_oracle: return "no_oracle";
        case TerminationReason::all_instances_positive_bag: return "all_instances_positive_bag";
        case TerminationReason::positive_query: return "positive_query";
        case TerminationReason::empty_bag: return "empty_bag";
        default: return "no_queryable_instance";
    }
}

inline std::optional<TerminationReason> termination_from_token(std::string_view t) {
    for (auto r : {TerminationReason::no_oracle, TerminationReason::all_instances_positive_bag,
                   TerminationReason::positive_query, TerminationReason::empty_bag,
                   TerminationReason::no_queryable_instance})
        if (termination_token(r) == t) return r;
    return std::nullopt;
}

struct QueryRecord {
    std::size_t pass = 0;  // 1-based training pass that issued the query
    std::string bag_id;
    std::size_t bag = 0;
    std::size_t instance = 0;
    double value = 0.0;
    Label answer = Label::unknown;
};

struct PmiModel {
    OneClassModel model;
    TerminationReason termination = TerminationReason::no_oracle;
    std::vector<QueryRecord> query_log;
    std::size_t passes = 0;
    LambdaSolution lambda;  // weights from the final pass
};

// Worst-case number of label queries the loop can issue. Below nu = 1/N no
// bag may sit at the box bound, so every pass shrinks every bag and the
// smallest bag caps the pass count; above it, each pass removes at least
// (1−nu)·N instances. At nu = 1 the per-pass guarantee degenerates to the
// single queried instance, giving n.
inline std::size_t max_query_bound(const Dataset& ds, double nu) {
    if (ds.bags.empty()) throw DataError("max_query_bound: empty dataset");
    if (!(nu > 0.0 && nu <= 1.0)) throw DataError("nu must lie in (0, 1]");
    const double n_bags = static_cast<double>(ds.bags.size());
    const std::size_t total = ds.total_instances();
    if (nu < 1.0 / n_bags) {
        std::size_t smallest = ds.bags[0].size();
        for (const auto& bag : ds.bags) smallest = std::min(smallest, bag.size());
        return smallest - 1;
    }
    if (nu >= 1.0) return total;
    double passes = std::ceil(static_cast<double>(total) / ((1.0 - nu) * n_bags));
    return static_cast<std::size_t>(passes) - 1;
}

// Runs the full loop: fit weights, train, correct by retraining if the bag
// labels disagree with the virtual-point labels, then repeatedly query the
// strongest positive-labeled instance and carve the dataset down while the
// oracle keeps answering negative.
inline PmiModel fit_pmi(const Dataset& ds, const KernelSpec& kernel, double nu,
                        LabelOracle* oracle = nullptr, const PmiConfig& cfg = {}) {
    validate(ds);
    if (!(nu > 0.0 && nu <= 1.0)) throw DataError("nu must lie in (0, 1]");

    PmiModel result;
    Dataset current = ds;

    for (;;) {
        ++result.passes;
        try {
            GramMatrix g = gram_matrix(kernel, current);
            result.lambda = fit_lambda(g, cfg.qp_tol,
                                       cfg.max_iter_factor * std::max<std::size_t>(g.k.size(), 1));
            result.model = train_once(current, g, result.lambda, kernel, nu, cfg);
            if (needs_retrain(result.model, current)) {
                auto reps = select_representatives(result.model, current);
                result.model = retrain(current, g, result.lambda, reps, kernel, nu, cfg);
            }
        } catch (const SolverError& e) {
            throw SolverError("training pass " + std::to_string(result.passes) + ": " + e.what());
        }

        if (oracle == nullptr || !oracle->available()) {
            result.termination = TerminationReason::no_oracle;
            return result;
        }

        bool bag_fully_positive = false;
        for (const auto& bag : current.bags) {
            bool all_positive = true;
            for (const auto& inst : bag.instances)
                if (decision_value(result.model, inst) < 0.0) {
                    all_positive = false;
                    break;
                }
            if (all_positive) {
                bag_fully_positive = true;
                break;
            }
        }
        if (bag_fully_positive) {
            result.termination = TerminationReason::all_instances_positive_bag;
            return result;
        }

        auto choice = select_query(result.model, current);
        if (!choice) {
            result.termination = TerminationReason::no_queryable_instance;
            return result;
        }

        const Bag& bag = current.bags[choice->bag];
        Label answer = oracle->query(bag, choice->instance);
        if (answer != Label::positive && answer != Label::negative)
            throw DataError("oracle returned an indeterminate label");
        result.query_log.push_back(
            {result.passes, bag.bag_id, choice->bag, choice->instance, choice->value, answer});

        if (answer == Label::positive) {
            result.termination = TerminationReason::positive_query;
            return result;
        }

        RemovalResult removal = remove_positive_labeled(current, result.model);
        if (removal.emptied_bag) {
            result.termination = TerminationReason::empty_bag;
            return result;
        }
        current = std::move(removal.dataset);
    }
}

// ---------------------------------------------------------------------------
// Property checkers

inline double outlier_bag_fraction(const OneClassModel& model) {
    if (model.bag_roles.empty()) throw DataError("outlier_bag_fraction: model has no bag roles");
    std::size_t outliers = 0;
    for (BagRole r : model.bag_roles)
        if (r == BagRole::outlier) ++outliers;
    return static_cast<double>(outliers) / static_cast<double>(model.bag_roles.size());
}

struct Theorem1Check {
    bool premise_holds = false;  // bag-level labels match the virtual-point labels
    double outlier_fraction = 0.0;
    bool bound_holds = false;  // fraction ≤ nu (meaningful when the premise holds)
};

// The outlier-fraction bound for the single-pass model is guaranteed only
// when classifying each bag agrees with classifying its virtual point; this
// verifies the premise instead of assuming it.
inline Theorem1Check check_theorem1(const OneClassModel& model, const Dataset& ds) {
    if (model.alpha.size() != ds.bags.size() || model.retrained)
        throw DataError("check_theorem1: expects the single-pass model for this dataset");
    Theorem1Check out;
    out.premise_holds = true;
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
        int bag_label = classify_bag(model, ds.bags[i]).label;
        int virtual_label = model.training_decision[i] >= 0.0 ? 1 : -1;
        if (bag_label != virtual_label) {
            out.premise_holds = false;
            break;
        }
    }
    out.outlier_fraction = outlier_bag_fraction(model);
    out.bound_holds = out.outlier_fraction <= model.nu + 1e-12;
    return out;
}

}  // namespace pmi
