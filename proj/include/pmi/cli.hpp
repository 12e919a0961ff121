// Command-line surface: synth | train | predict | cv | theorems.
//
// Machine-readable output (datasets, model files, prediction lines, report
// blocks) goes to stdout or --out and contains nothing nondeterministic;
// progress, prompts, and timing go to stderr. Exit codes: 0 success, 1 usage
// error, 2 data error, 3 solver non-convergence.
#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/eval.hpp"
#include "pmi/format.hpp"
#include "pmi/kernel.hpp"
#include "pmi/model_io.hpp"
#include "pmi/pmi.hpp"

namespace pmi::cli {

namespace detail {

inline Dataset load_data(const std::string& path, std::istream& in) {
    if (path == "-") return parse_mil_csv(in);
    std::ifstream f(path);
    if (!f) throw DataError("cannot open data file '" + path + "'");
    return parse_mil_csv(f);
}

inline std::string load_text(const std::string& path, std::istream& in) {
    std::ostringstream buf;
    if (path == "-") {
        buf << in.rdbuf();
    } else {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open file '" + path + "'");
        buf << f.rdbuf();
    }
    return buf.str();
}

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path == "-") {
        out << text;
        out.flush();
        return;
    }
    std::ofstream f(path);
    if (!f) throw DataError("cannot open output file '" + path + "'");
    f << text;
    if (!f) throw DataError("failed writing '" + path + "'");
}

inline KernelSpec resolve_kernel(const std::string& text, std::size_t dimension) {
    if (text.empty()) return KernelSpec::default_for_dimension(dimension);
    return KernelSpec::parse(text);
}

struct OracleBox {
    std::unique_ptr<LabelOracle> owned;
    LabelOracle* ptr = nullptr;
};

inline OracleBox make_oracle(const std::string& mode, std::istream& in, std::ostream& err) {
    OracleBox box;
    if (mode == "ground-truth") {
        box.owned = std::make_unique<GroundTruthOracle>();
        box.ptr = box.owned.get();
    } else if (mode == "interactive") {
        box.owned = std::make_unique<InteractiveOracle>(in, err);
        box.ptr = box.owned.get();
    }
    return box;
}

inline RunConfig::OracleMode oracle_mode(const std::string& mode) {
    if (mode == "ground-truth") return RunConfig::OracleMode::ground_truth;
    if (mode == "interactive") return RunConfig::OracleMode::interactive;
    return RunConfig::OracleMode::none;
}

inline PmiConfig::RetrainBound retrain_bound(const std::string& mode) {
    return mode == "literal" ? PmiConfig::RetrainBound::literal
                             : PmiConfig::RetrainBound::theorem_consistent;
}

// Training consumes positive bags only; explicitly negative bags in the input
// are dropped (kept for prediction and evaluation, never for fitting).
inline Dataset training_bags(const Dataset& ds, const char* what, std::ostream& err) {
    Dataset kept;
    kept.dimension = ds.dimension;
    for (const auto& bag : ds.bags)
        if (bag.bag_label != Label::negative) kept.bags.push_back(bag);
    if (kept.bags.size() != ds.bags.size())
        err << what << ": ignoring " << ds.bags.size() - kept.bags.size()
            << " negative bags for training\n";
    return kept;
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::istream& in, std::ostream& out,
               std::ostream& err) {
    CLI::App app{"one-class multiple-instance learner trained on positive bags only"};
    app.require_subcommand(1);

    // --- synth ------------------------------------------------------------
    SynthConfig synth_cfg;
    std::string synth_out = "-";
    std::string synth_mode = "scattered";
    auto* synth = app.add_subcommand("synth", "generate a synthetic MIL-CSV dataset");
    synth->add_option("--out", synth_out, "output path, - for stdout");
    synth->add_option("--seed", synth_cfg.seed, "RNG seed");
    synth->add_option("--positive-bags", synth_cfg.positive_bags, "number of positive bags");
    synth->add_option("--negative-bags", synth_cfg.negative_bags, "number of negative bags");
    synth->add_option("--instances-per-bag", synth_cfg.instances_per_bag, "instances in each bag");
    synth->add_option("--positives-per-bag", synth_cfg.positives_per_bag,
                      "positive instances in each positive bag");
    synth->add_option("--dimension", synth_cfg.dimension, "feature dimension");
    synth->add_option("--positive-center", synth_cfg.positive_center,
                      "positive cluster center (comma-separated; default all 0.5)")
        ->delimiter(',');
    synth->add_option("--positive-spread", synth_cfg.positive_spread,
                      "positive cluster standard deviation");
    synth->add_option("--negative-mode", synth_mode, "negative instance placement")
        ->check(CLI::IsMember({"scattered", "clustered"}));
    synth->add_option("--negative-center", synth_cfg.negative_center,
                      "negative cluster center for clustered mode (comma-separated)")
        ->delimiter(',');
    synth->add_option("--negative-spread", synth_cfg.negative_spread,
                      "negative cluster standard deviation (clustered mode)");

    // --- shared training flags ---------------------------------------------
    struct TrainFlags {
        std::string data;
        std::string kernel;  // empty = rbf with gamma 1/d
        double nu = 0.1;
        std::string oracle = "none";
        bool scale = false;
        double tol = 1e-6;
        std::size_t max_iter_factor = 100;
        std::string retrain_bound = "theorem-consistent";
    };
    auto add_train_flags = [](CLI::App* sub, TrainFlags& f, bool with_oracle) {
        sub->add_option("--data", f.data, "MIL-CSV input path, - for stdin")->required();
        sub->add_option("--kernel", f.kernel,
                        "rbf:gamma=<float> | linear | poly:degree=<int>,coef=<float> "
                        "(default: rbf with gamma = 1/dimension)");
        sub->add_option("--nu", f.nu, "outlier-fraction parameter in (0,1]");
        if (with_oracle)
            sub->add_option("--oracle", f.oracle, "label oracle for the query loop")
                ->check(CLI::IsMember({"none", "ground-truth", "interactive"}));
        sub->add_flag("--scale", f.scale, "min-max scale features to [0,1] on the training data");
        sub->add_option("--tol", f.tol, "solver KKT tolerance");
        sub->add_option("--max-iter-factor", f.max_iter_factor,
                        "solver iteration cap as a multiple of problem size");
        sub->add_option("--retrain-bound", f.retrain_bound,
                        "box bound variant for the 2N-point retraining step")
            ->check(CLI::IsMember({"theorem-consistent", "literal"}));
    };

    // --- train --------------------------------------------------------------
    TrainFlags train_flags;
    std::string train_model_out = "-";
    bool train_verbose = false;
    auto* train = app.add_subcommand("train", "fit a model on positive bags");
    add_train_flags(train, train_flags, true);
    train->add_option("--model-out", train_model_out, "model output path, - for stdout");
    train->add_flag("--verbose", train_verbose, "print solver diagnostics to stderr");

    // --- predict --------------------------------------------------------------
    std::string predict_model, predict_data, predict_out = "-";
    auto* predict = app.add_subcommand("predict", "classify bags with a saved model");
    predict->add_option("--model", predict_model, "model file, - for stdin")->required();
    predict->add_option("--data", predict_data, "MIL-CSV input path, - for stdin")->required();
    predict->add_option("--out", predict_out, "output path, - for stdout");

    // --- cv --------------------------------------------------------------
    TrainFlags cv_flags;
    std::size_t cv_k = 10, cv_reps = 1;
    std::uint64_t cv_seed = 0;
    std::string cv_out = "-";
    auto* cv = app.add_subcommand("cv", "repeated stratified cross-validation");
    add_train_flags(cv, cv_flags, true);
    cv->add_option("--k", cv_k, "number of folds");
    cv->add_option("--reps", cv_reps, "number of re-seeded repetitions");
    cv->add_option("--seed", cv_seed, "base split seed (repetition r uses seed+r)");
    cv->add_option("--out", cv_out, "machine-readable report path, - for stdout");

    // --- theorems --------------------------------------------------------------
    TrainFlags thm_flags;
    std::vector<double> thm_nus{0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> thm_gammas{1.0, 5.0, 10.0, 50.0, 100.0};
    std::string thm_out = "-";
    auto* thm = app.add_subcommand(
        "theorems", "sweep a (nu, gamma) grid and check the guaranteed bounds");
    thm->add_option("--data", thm_flags.data, "MIL-CSV input with instance ground truth")
        ->required();
    thm->add_option("--nus", thm_nus, "nu values (comma-separated)")->delimiter(',');
    thm->add_option("--gammas", thm_gammas, "rbf gamma values (comma-separated)")->delimiter(',');
    thm->add_flag("--scale", thm_flags.scale, "min-max scale features first");
    thm->add_option("--tol", thm_flags.tol, "solver KKT tolerance");
    thm->add_option("--max-iter-factor", thm_flags.max_iter_factor,
                    "solver iteration cap as a multiple of problem size");
    thm->add_option("--retrain-bound", thm_flags.retrain_bound,
                    "box bound variant for the 2N-point retraining step")
        ->check(CLI::IsMember({"theorem-consistent", "literal"}));
    thm->add_option("--out", thm_out, "machine-readable report path, - for stdout");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            synth_cfg.negative_mode = synth_mode == "clustered"
                                          ? SynthConfig::NegativeMode::clustered
                                          : SynthConfig::NegativeMode::scattered;
            Dataset ds = synth_generate(synth_cfg);
            detail::write_text(synth_out, serialize_mil_csv(ds), out);
            err << "synth: " << ds.bags.size() << " bags, " << ds.total_instances()
                << " instances, dimension " << ds.dimension << "\n";
            return 0;
        }

        if (train->parsed()) {
            Dataset ds = detail::training_bags(detail::load_data(train_flags.data, in), "train", err);
            KernelSpec kernel = detail::resolve_kernel(train_flags.kernel, ds.dimension);
            std::optional<ScaleParams> scale_params;
            if (train_flags.scale) {
                auto [scaled, params] = scale_features(ds);
                ds = std::move(scaled);
                scale_params = std::move(params);
            }
            PmiConfig cfg;
            cfg.qp_tol = train_flags.tol;
            cfg.max_iter_factor = train_flags.max_iter_factor;
            cfg.retrain_bound = detail::retrain_bound(train_flags.retrain_bound);

            auto oracle = detail::make_oracle(train_flags.oracle, in, err);
            auto t0 = std::chrono::steady_clock::now();
            PmiModel fitted = fit_pmi(ds, kernel, train_flags.nu, oracle.ptr, cfg);
            auto t1 = std::chrono::steady_clock::now();

            detail::write_text(train_model_out, save_model_string(fitted, scale_params), out);
            const bool converged = fitted.model.converged && fitted.lambda.converged;
            err << "train: kernel=" << kernel.str() << " nu=" << train_flags.nu
                << " passes=" << fitted.passes << " queries=" << fitted.query_log.size()
                << " termination=" << termination_token(fitted.termination)
                << " retrained=" << (fitted.model.retrained ? 1 : 0)
                << " converged=" << (converged ? 1 : 0) << " ("
                << std::chrono::duration<double>(t1 - t0).count() << " s)\n";
            if (train_verbose)
                err << "train: qp iterations=" << fitted.model.qp_iterations
                    << " kkt residual=" << fitted.model.qp_residual
                    << " rho=" << fitted.model.rho
                    << " expansion terms=" << fitted.model.expansion.size() << "\n";
            if (!converged) {
                if (!fitted.lambda.converged)
                    err << "train: bag-weight solver hit its iteration cap after "
                        << fitted.lambda.iterations << " iterations\n";
                if (!fitted.model.converged)
                    err << "train: boundary solver did not reach tolerance " << train_flags.tol
                        << " (kkt residual " << fitted.model.qp_residual << ")\n";
                err << "train: model written anyway; raise --max-iter-factor to converge\n";
                return 3;
            }
            return 0;
        }

        if (predict->parsed()) {
            SavedModel sm = [&] {
                std::string text = detail::load_text(predict_model, in);
                return load_model_string(text);
            }();
            Dataset ds = detail::load_data(predict_data, in);
            if (sm.scale) ds = apply_scale(ds, *sm.scale);
            if (ds.dimension != sm.pmi.model.dimension)
                throw DataError("data dimension " + std::to_string(ds.dimension) +
                                " does not match model dimension " +
                                std::to_string(sm.pmi.model.dimension));
            std::string lines;
            for (const auto& bag : ds.bags) {
                BagPrediction p = classify_bag(sm.pmi.model, bag);
                lines += bag.bag_id;
                lines += p.label > 0 ? ",+1," : ",-1,";
                lines += std::to_string(p.witness_index);
                lines += ',';
                lines += format_double(p.witness_value);
                lines += '\n';
            }
            detail::write_text(predict_out, lines, out);
            err << "predict: " << ds.bags.size() << " bags\n";
            return 0;
        }

        if (cv->parsed()) {
            Dataset ds = detail::load_data(cv_flags.data, in);
            RunConfig cfg;
            cfg.kernel = detail::resolve_kernel(cv_flags.kernel, ds.dimension);
            cfg.nu = cv_flags.nu;
            cfg.k_folds = cv_k;
            cfg.seed = cv_seed;
            cfg.scale = cv_flags.scale;
            cfg.oracle_mode = detail::oracle_mode(cv_flags.oracle);
            cfg.pmi.qp_tol = cv_flags.tol;
            cfg.pmi.max_iter_factor = cv_flags.max_iter_factor;
            cfg.pmi.retrain_bound = detail::retrain_bound(cv_flags.retrain_bound);

            auto oracle = detail::make_oracle(cv_flags.oracle, in, err);
            auto t0 = std::chrono::steady_clock::now();
            EvalReport report = cross_validate(ds, cfg, cv_reps, oracle.ptr);
            auto t1 = std::chrono::steady_clock::now();

            std::string text;
            text += "command=cv\n";
            text += "kernel=" + cfg.kernel.str() + "\n";
            text += "nu=" + format_double(cfg.nu) + "\n";
            text += "k=" + std::to_string(cfg.k_folds) + "\n";
            text += "reps=" + std::to_string(cv_reps) + "\n";
            text += "seed=" + std::to_string(cfg.seed) + "\n";
            text += "scale=" + std::string(cfg.scale ? "1" : "0") + "\n";
            text += "oracle=" + cv_flags.oracle + "\n";
            text += "retrain_bound=" + cv_flags.retrain_bound + "\n";
            text += "tol=" + format_double(cv_flags.tol) + "\n";
            text += "folds=" + std::to_string(report.folds.size()) + "\n";
            text += "mean_accuracy=" + format_double(report.mean_accuracy) + "\n";
            text += "sd_accuracy=" + format_double(report.sd_accuracy) + "\n";
            text += "per_fold=rep,fold,train_bags,test_bags,accuracy,queries,termination,converged\n";
            bool all_converged = true;
            for (const auto& f : report.folds) {
                text += std::to_string(f.repetition) + ',' + std::to_string(f.fold) + ',' +
                        std::to_string(f.train_bags) + ',' + std::to_string(f.test_bags) + ',' +
                        format_double(f.accuracy) + ',' + std::to_string(f.queries) + ',' +
                        std::string(termination_token(f.termination)) + ',' +
                        (f.converged ? "1" : "0") + '\n';
                all_converged = all_converged && f.converged;
            }
            detail::write_text(cv_out, text, out);
            err << "cv: mean accuracy " << report.mean_accuracy << " +- " << report.sd_accuracy
                << " over " << report.folds.size() << " folds ("
                << std::chrono::duration<double>(t1 - t0).count() << " s)\n";
            if (!all_converged) {
                err << "cv: at least one fold did not reach solver tolerance\n";
                return 3;
            }
            return 0;
        }

        if (thm->parsed()) {
            Dataset ds =
                detail::training_bags(detail::load_data(thm_flags.data, in), "theorems", err);
            if (thm_flags.scale) ds = scale_features(ds).first;
            PmiConfig cfg;
            cfg.qp_tol = thm_flags.tol;
            cfg.max_iter_factor = thm_flags.max_iter_factor;
            cfg.retrain_bound = detail::retrain_bound(thm_flags.retrain_bound);

            auto t0 = std::chrono::steady_clock::now();
            TheoremReport report = check_theorems(ds, thm_nus, thm_gammas, cfg);
            auto t1 = std::chrono::steady_clock::now();

            std::string text;
            text += "command=theorems\n";
            text += "cells=" + std::to_string(report.cells.size()) + "\n";
            text += "all_outlier_bounds_hold=" + std::string(report.all_outlier_ok ? "1" : "0") +
                    "\n";
            text += "all_query_bounds_hold=" + std::string(report.all_query_ok ? "1" : "0") + "\n";
            text +=
                "per_cell=nu,gamma,outlier_fraction,outlier_ok,retrained,queries,query_bound,"
                "query_ok,termination,converged\n";
            bool all_converged = true;
            for (const auto& c : report.cells) {
                text += format_double(c.nu) + ',' + format_double(c.gamma) + ',' +
                        format_double(c.outlier_fraction) + ',' + (c.outlier_bound_ok ? "1" : "0") +
                        ',' + (c.retrained ? "1" : "0") + ',' + std::to_string(c.queries) + ',' +
                        std::to_string(c.query_bound) + ',' + (c.query_bound_ok ? "1" : "0") + ',' +
                        std::string(termination_token(c.termination)) + ',' +
                        (c.converged ? "1" : "0") + '\n';
                all_converged = all_converged && c.converged;
            }
            detail::write_text(thm_out, text, out);
            err << "theorems: " << report.cells.size() << " cells, outlier bounds "
                << (report.all_outlier_ok ? "hold" : "VIOLATED") << ", query bounds "
                << (report.all_query_ok ? "hold" : "VIOLATED") << " ("
                << std::chrono::duration<double>(t1 - t0).count() << " s)\n";
            if (!all_converged) {
                err << "theorems: at least one cell did not reach solver tolerance\n";
                return 3;
            }
            return 0;
        }
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace pmi::cli
