// Bag/dataset representation, MIL-CSV ingestion, feature scaling, fold
// splitting and synthetic dataset generation.
//
// MIL-CSV: one instance per line,
//     bag_id,bag_label,instance_label,f1,...,fd
// labels in {+1,-1,?}, '#' starts a comment line, an optional header line
// beginning "bag_id," is skipped. Rows sharing a bag_id form one bag (first
// appearance fixes bag order) and must agree on the bag label.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmi/format.hpp"

namespace pmi {

enum class Label { positive, negative, unknown };

inline std::string_view label_token(Label l) {
    switch (l) {
        case Label::positive: return "+1";
        case Label::negative: return "-1";
        default: return "?";
    }
}

inline std::optional<Label> label_from_token(std::string_view t) {
    if (t == "+1") return Label::positive;
    if (t == "-1") return Label::negative;
    if (t == "?") return Label::unknown;
    return std::nullopt;
}

// Parse failure with the 1-based input line it happened on (0 = whole input).
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Instance {
    std::vector<double> features;
    Label instance_label = Label::unknown;
};

struct Bag {
    std::string bag_id;
    std::vector<Instance> instances;
    Label bag_label = Label::unknown;

    std::size_t size() const { return instances.size(); }
};

struct Dataset {
    std::vector<Bag> bags;
    std::size_t dimension = 0;

    std::size_t bag_count() const { return bags.size(); }
    std::size_t total_instances() const {
        std::size_t n = 0;
        for (const auto& b : bags) n += b.size();
        return n;
    }
};

// Structural invariants: nonempty bags, consistent dimension, finite
// features, unique bag ids. Treat datasets as immutable once validated.
inline void validate(const Dataset& ds) {
    std::map<std::string_view, int> seen;
    for (const auto& bag : ds.bags) {
        if (bag.instances.empty())
            throw DataError("bag '" + bag.bag_id + "' has no instances");
        if (++seen[bag.bag_id] > 1)
            throw DataError("duplicate bag id '" + bag.bag_id + "'");
        for (const auto& inst : bag.instances) {
            if (inst.features.size() != ds.dimension)
                throw DataError("bag '" + bag.bag_id + "': instance dimension " +
                                std::to_string(inst.features.size()) +
                                " != dataset dimension " + std::to_string(ds.dimension));
            for (double v : inst.features)
                if (!std::isfinite(v))
                    throw DataError("bag '" + bag.bag_id + "': non-finite feature");
        }
    }
}

// ---------------------------------------------------------------------------
// MIL-CSV

inline Dataset parse_mil_csv(std::istream& in) {
    Dataset ds;
    std::map<std::string, std::size_t> bag_index;
    std::string line;
    std::size_t line_no = 0;
    bool saw_data = false;

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = trim(line);
        if (row.empty() || row.front() == '#') continue;
        if (!saw_data && row.rfind("bag_id,", 0) == 0) continue;  // optional header

        auto fields = split(row, ',');
        if (fields.size() < 4)
            throw ParseError(line_no, "expected bag_id,bag_label,instance_label and at least one feature, got " +
                                          std::to_string(fields.size()) + " field(s)");

        std::string bag_id(trim(fields[0]));
        if (bag_id.empty()) throw ParseError(line_no, "empty bag_id");

        auto bag_label = label_from_token(trim(fields[1]));
        if (!bag_label)
            throw ParseError(line_no, "unknown bag label token '" + std::string(trim(fields[1])) + "'");
        auto inst_label = label_from_token(trim(fields[2]));
        if (!inst_label)
            throw ParseError(line_no, "unknown instance label token '" + std::string(trim(fields[2])) + "'");

        Instance inst;
        inst.instance_label = *inst_label;
        inst.features.reserve(fields.size() - 3);
        for (std::size_t i = 3; i < fields.size(); ++i) {
            double v;
            if (!parse_double(trim(fields[i]), v))
                throw ParseError(line_no, "unparsable number '" + std::string(trim(fields[i])) + "'");
            if (!std::isfinite(v))
                throw ParseError(line_no, "non-finite feature value");
            inst.features.push_back(v);
        }

        if (!saw_data) {
            ds.dimension = inst.features.size();
            saw_data = true;
        } else if (inst.features.size() != ds.dimension) {
            throw ParseError(line_no, "row has " + std::to_string(inst.features.size()) +
                                          " features, expected " + std::to_string(ds.dimension));
        }

        auto it = bag_index.find(bag_id);
        if (it == bag_index.end()) {
            bag_index.emplace(bag_id, ds.bags.size());
            Bag bag;
            bag.bag_id = bag_id;
            bag.bag_label = *bag_label;
            bag.instances.push_back(std::move(inst));
            ds.bags.push_back(std::move(bag));
        } else {
            Bag& bag = ds.bags[it->second];
            if (bag.bag_label != *bag_label)
                throw ParseError(line_no, "bag '" + bag_id + "' changes bag label");
            bag.instances.push_back(std::move(inst));
        }
    }

    if (!saw_data) throw ParseError(0, "empty input: no data rows");
    return ds;
}

inline Dataset parse_mil_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_mil_csv(in);
}

// Canonical form: bags in order, no comments or header, 17-significant-digit
// floats.
inline std::string serialize_mil_csv(const Dataset& ds) {
    std::string out;
    for (const auto& bag : ds.bags) {
        for (const auto& inst : bag.instances) {
            out += bag.bag_id;
            out += ',';
            out += label_token(bag.bag_label);
            out += ',';
            out += label_token(inst.instance_label);
            for (double v : inst.features) {
                out += ',';
                out += format_double(v);
            }
            out += '\n';
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature scaling

struct ScaleParams {
    std::vector<double> min;
    std::vector<double> max;
};

inline ScaleParams fit_scale(const Dataset& ds) {
    if (ds.bags.empty()) throw DataError("cannot fit scaling on an empty dataset");
    validate(ds);
    ScaleParams p;
    p.min.assign(ds.dimension, std::numeric_limits<double>::infinity());
    p.max.assign(ds.dimension, -std::numeric_limits<double>::infinity());
    for (const auto& bag : ds.bags)
        for (const auto& inst : bag.instances)
            for (std::size_t d = 0; d < ds.dimension; ++d) {
                p.min[d] = std::min(p.min[d], inst.features[d]);
                p.max[d] = std::max(p.max[d], inst.features[d]);
            }
    return p;
}

// Min-max map to [0,1] on the fitting data. Constant dimensions map to 0;
// data scaled with foreign params may fall outside [0,1] and is not clamped.
inline Dataset apply_scale(const Dataset& ds, const ScaleParams& p) {
    if (p.min.size() != ds.dimension || p.max.size() != ds.dimension)
        throw DataError("scale parameter dimension mismatch");
    Dataset out = ds;
    for (auto& bag : out.bags)
        for (auto& inst : bag.instances)
            for (std::size_t d = 0; d < ds.dimension; ++d) {
                double range = p.max[d] - p.min[d];
                inst.features[d] = range > 0.0 ? (inst.features[d] - p.min[d]) / range : 0.0;
            }
    return out;
}

inline std::pair<Dataset, ScaleParams> scale_features(const Dataset& ds) {
    ScaleParams p = fit_scale(ds);
    return {apply_scale(ds, p), p};
}

// ---------------------------------------------------------------------------
// Fold splitting

struct FoldSplit {
    std::vector<std::string> train_bag_ids;  // positive bags of the other folds
    std::vector<std::string> test_bag_ids;   // all bags of the held-out fold
};

// Stratified by bag label, deterministic per seed. The training side of each
// split carries only positive bags; held-out folds keep every label.
inline std::vector<FoldSplit> split_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DataError("fold count must be at least 2");
    validate(ds);

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> classes(3);
    for (std::size_t i = 0; i < ds.bags.size(); ++i)
        classes[static_cast<std::size_t>(ds.bags[i].bag_label)].push_back(i);

    std::vector<std::vector<std::size_t>> fold_members(k);
    for (auto& cls : classes) {
        if (cls.empty()) continue;
        if (cls.size() < k)
            throw DataError("class with " + std::to_string(cls.size()) +
                            " bags cannot be split into " + std::to_string(k) + " folds");
        std::shuffle(cls.begin(), cls.end(), rng);
        for (std::size_t i = 0; i < cls.size(); ++i) fold_members[i % k].push_back(cls[i]);
    }

    // emit ids in dataset order within each split
    std::vector<FoldSplit> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        auto test = fold_members[f];
        std::sort(test.begin(), test.end());
        for (std::size_t idx : test) out[f].test_bag_ids.push_back(ds.bags[idx].bag_id);

        std::vector<std::size_t> train;
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            for (std::size_t idx : fold_members[g])
                if (ds.bags[idx].bag_label == Label::positive) train.push_back(idx);
        }
        std::sort(train.begin(), train.end());
        for (std::size_t idx : train) out[f].train_bag_ids.push_back(ds.bags[idx].bag_id);
    }
    return out;
}

inline Dataset subset_by_ids(const Dataset& ds, const std::vector<std::string>& ids) {
    Dataset out;
    out.dimension = ds.dimension;
    for (const auto& id : ids) {
        auto it = std::find_if(ds.bags.begin(), ds.bags.end(),
                               [&](const Bag& b) { return b.bag_id == id; });
        if (it == ds.bags.end()) throw DataError("unknown bag id '" + id + "'");
        out.bags.push_back(*it);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic datasets

struct SynthConfig {
    std::size_t positive_bags = 10;
    std::size_t negative_bags = 0;
    std::size_t instances_per_bag = 4;
    std::size_t dimension = 2;
    std::size_t positives_per_bag = 1;

    std::vector<double> positive_center;  // empty = all 0.5
    double positive_spread = 0.05;

    enum class NegativeMode { scattered, clustered };
    NegativeMode negative_mode = NegativeMode::scattered;
    std::vector<double> negative_center;  // clustered mode, empty = all 0.5
    double negative_spread = 0.05;

    std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& c) {
    if (c.positive_bags + c.negative_bags == 0) throw DataError("synth: no bags requested");
    if (c.dimension == 0) throw DataError("synth: dimension must be positive");
    if (c.instances_per_bag == 0) throw DataError("synth: instances_per_bag must be positive");
    if (c.positives_per_bag < 1 || c.positives_per_bag > c.instances_per_bag)
        throw DataError("synth: positives_per_bag must be in [1, instances_per_bag]");
    if (c.positive_spread < 0 || c.negative_spread < 0)
        throw DataError("synth: spreads must be nonnegative");
    if (!c.positive_center.empty() && c.positive_center.size() != c.dimension)
        throw DataError("synth: positive center dimension mismatch");
    if (c.negative_mode == SynthConfig::NegativeMode::clustered &&
        !c.negative_center.empty() && c.negative_center.size() != c.dimension)
        throw DataError("synth: negative center dimension mismatch");
}

// Positive bags hold `positives_per_bag` cluster draws followed by negatives;
// negative bags hold only negatives. Instance-level ground truth is recorded.
inline Dataset synth_generate(const SynthConfig& c) {
    validate(c);
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> pos_center = c.positive_center.empty()
                                         ? std::vector<double>(c.dimension, 0.5)
                                         : c.positive_center;
    std::vector<double> neg_center = c.negative_center.empty()
                                         ? std::vector<double>(c.dimension, 0.5)
                                         : c.negative_center;

    auto draw_positive = [&] {
        Instance inst;
        inst.instance_label = Label::positive;
        inst.features.resize(c.dimension);
        for (std::size_t d = 0; d < c.dimension; ++d)
            inst.features[d] = pos_center[d] + c.positive_spread * gauss(rng);
        return inst;
    };
    auto draw_negative = [&] {
        Instance inst;
        inst.instance_label = Label::negative;
        inst.features.resize(c.dimension);
        if (c.negative_mode == SynthConfig::NegativeMode::scattered) {
            for (std::size_t d = 0; d < c.dimension; ++d) inst.features[d] = unit(rng);
        } else {
            for (std::size_t d = 0; d < c.dimension; ++d)
                inst.features[d] = neg_center[d] + c.negative_spread * gauss(rng);
        }
        return inst;
    };

    Dataset ds;
    ds.dimension = c.dimension;
    for (std::size_t b = 0; b < c.positive_bags; ++b) {
        Bag bag;
        bag.bag_id = "p" + std::to_string(b + 1);
        bag.bag_label = Label::positive;
        for (std::size_t j = 0; j < c.positives_per_bag; ++j) bag.instances.push_back(draw_positive());
        for (std::size_t j = c.positives_per_bag; j < c.instances_per_bag; ++j)
            bag.instances.push_back(draw_negative());
        ds.bags.push_back(std::move(bag));
    }
    for (std::size_t b = 0; b < c.negative_bags; ++b) {
        Bag bag;
        bag.bag_id = "n" + std::to_string(b + 1);
        bag.bag_label = Label::negative;
        for (std::size_t j = 0; j < c.instances_per_bag; ++j) bag.instances.push_back(draw_negative());
        ds.bags.push_back(std::move(bag));
    }
    validate(ds);
    return ds;
}

}  // namespace pmi
