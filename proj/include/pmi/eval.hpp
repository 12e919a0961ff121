// Evaluation harness: bag-level accuracy, repeated stratified
// cross-validation (training on positive bags only, scaling fit on training
// folds only), and the property battery that sweeps (nu, gamma) cells while
// recording outlier fractions and query counts against their bounds.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/kernel.hpp"
#include "pmi/pmi.hpp"

namespace pmi {

struct RunConfig {
    KernelSpec kernel = KernelSpec::rbf(1.0);
    double nu = 0.1;
    std::size_t k_folds = 10;
    std::uint64_t seed = 0;
    bool scale = false;

    enum class OracleMode { none, ground_truth, interactive };
    OracleMode oracle_mode = OracleMode::none;

    PmiConfig pmi;  // solver tolerances and retrain bound variant
};

inline double accuracy(const OneClassModel& model, const Dataset& test) {
    if (test.bags.empty()) throw DataError("accuracy: empty test set");
    std::size_t correct = 0;
    for (const auto& bag : test.bags) {
        if (bag.bag_label == Label::unknown)
            throw DataError("accuracy: bag '" + bag.bag_id + "' has no label");
        int truth = bag.bag_label == Label::positive ? 1 : -1;
        if (classify_bag(model, bag).label == truth) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.bags.size());
}

struct FoldResult {
    std::size_t repetition = 0;
    std::size_t fold = 0;
    double accuracy = 0.0;
    std::size_t queries = 0;
    TerminationReason termination = TerminationReason::no_oracle;
    std::size_t train_bags = 0;
    std::size_t test_bags = 0;
    bool converged = true;
    double wall_ms = 0.0;  // informational only; excluded from machine output
};

struct EvalReport {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double sd_accuracy = 0.0;  // sample standard deviation over folds
};

inline void finalize_stats(EvalReport& report) {
    const std::size_t n = report.folds.size();
    if (n == 0) return;
    double sum = 0.0;
    for (const auto& f : report.folds) sum += f.accuracy;
    report.mean_accuracy = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (const auto& f : report.folds) {
            double d = f.accuracy - report.mean_accuracy;
            ss += d * d;
        }
        report.sd_accuracy = std::sqrt(ss / static_cast<double>(n - 1));
    }
}

// Repetition r re-splits with seed+r; each fold trains on the other folds'
// positive bags and tests on the full held-out fold. With scaling enabled the
// min/max map comes from the training bags alone.
inline EvalReport cross_validate(const Dataset& ds, const RunConfig& cfg, std::size_t repetitions,
                                 LabelOracle* interactive = nullptr) {
    if (repetitions == 0) throw DataError("cross_validate: repetitions must be positive");
    if (cfg.k_folds < 2) throw DataError("cross_validate: need at least 2 folds");
    validate(ds);

    EvalReport report;
    GroundTruthOracle ground_truth;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        auto splits = split_folds(ds, cfg.k_folds, cfg.seed + rep);
        for (std::size_t f = 0; f < splits.size(); ++f) {
            Dataset train = subset_by_ids(ds, splits[f].train_bag_ids);
            Dataset test = subset_by_ids(ds, splits[f].test_bag_ids);
            if (train.bags.empty()) throw DataError("cross_validate: a fold has no training bags");

            if (cfg.scale) {
                auto [scaled, params] = scale_features(train);
                train = std::move(scaled);
                test = apply_scale(test, params);
            }

            LabelOracle* oracle = nullptr;
            if (cfg.oracle_mode == RunConfig::OracleMode::ground_truth) oracle = &ground_truth;
            if (cfg.oracle_mode == RunConfig::OracleMode::interactive) {
                if (!interactive) throw DataError("cross_validate: no interactive oracle wired");
                oracle = interactive;
            }

            auto t0 = std::chrono::steady_clock::now();
            PmiModel fitted = fit_pmi(train, cfg.kernel, cfg.nu, oracle, cfg.pmi);
            auto t1 = std::chrono::steady_clock::now();

            FoldResult fr;
            fr.repetition = rep;
            fr.fold = f;
            fr.accuracy = accuracy(fitted.model, test);
            fr.queries = fitted.query_log.size();
            fr.termination = fitted.termination;
            fr.train_bags = train.bags.size();
            fr.test_bags = test.bags.size();
            fr.converged = fitted.model.converged && fitted.lambda.converged;
            fr.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            report.folds.push_back(fr);
        }
    }
    finalize_stats(report);
    return report;
}

struct TheoremCell {
    double nu = 0.0;
    double gamma = 0.0;
    double outlier_fraction = 0.0;
    bool outlier_bound_ok = false;  // fraction ≤ nu
    bool retrained = false;
    std::size_t queries = 0;
    std::size_t query_bound = 0;
    bool query_bound_ok = false;
    bool converged = true;
    TerminationReason termination = TerminationReason::no_oracle;
};

struct TheoremReport {
    std::vector<TheoremCell> cells;
    bool all_outlier_ok = true;
    bool all_query_ok = true;
};

// Runs the full loop with the ground-truth oracle for every (nu, gamma) cell
// and compares the recorded quantities against their guaranteed bounds.
inline TheoremReport check_theorems(const Dataset& ds, const std::vector<double>& nus,
                                    const std::vector<double>& gammas, const PmiConfig& cfg = {}) {
    validate(ds);
    if (nus.empty() || gammas.empty()) throw DataError("check_theorems: empty parameter grid");

    TheoremReport report;
    GroundTruthOracle oracle;
    for (double nu : nus) {
        for (double gamma : gammas) {
            PmiModel fitted = fit_pmi(ds, KernelSpec::rbf(gamma), nu, &oracle, cfg);

            TheoremCell cell;
            cell.nu = nu;
            cell.gamma = gamma;
            cell.outlier_fraction = outlier_bag_fraction(fitted.model);
            cell.outlier_bound_ok = cell.outlier_fraction <= nu + 1e-12;
            cell.retrained = fitted.model.retrained;
            cell.queries = fitted.query_log.size();
            cell.query_bound = max_query_bound(ds, nu);
            cell.query_bound_ok = cell.queries <= cell.query_bound;
            cell.converged = fitted.model.converged && fitted.lambda.converged;
            cell.termination = fitted.termination;

            report.all_outlier_ok = report.all_outlier_ok && cell.outlier_bound_ok;
            report.all_query_ok = report.all_query_ok && cell.query_bound_ok;
            report.cells.push_back(cell);
        }
    }
    return report;
}

}  // namespace pmi
