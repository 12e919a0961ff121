#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pmi/dataset.hpp"
#include "pmi/format.hpp"

using namespace pmi;

TEST_CASE("doubles round-trip exactly through text") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-300, 300);
    for (int i = 0; i < 2000; ++i) {
        double v = std::ldexp(mant(rng), expo(rng));
        double back = 0.0;
        REQUIRE(parse_double(format_double(v), back));
        REQUIRE(std::memcmp(&v, &back, sizeof v) == 0);
    }
    for (double v : {0.0, -0.0, 1.0, -1.0, 0.1, 1e308, 5e-324}) {
        double back = 1.0;
        REQUIRE(parse_double(format_double(v), back));
        REQUIRE(std::memcmp(&v, &back, sizeof v) == 0);
    }
}

TEST_CASE("number parsing rejects partial tokens") {
    double v;
    CHECK_FALSE(parse_double("", v));
    CHECK_FALSE(parse_double("1.5x", v));
    CHECK_FALSE(parse_double("nope", v));
    CHECK(parse_double("-2.5e-3", v));
    CHECK(v == -2.5e-3);
    std::size_t n;
    CHECK_FALSE(parse_size("12.5", n));
    CHECK_FALSE(parse_size("-3", n));
    CHECK(parse_size("42", n));
    CHECK(n == 42);
}

TEST_CASE("trim and split behave on edges") {
    CHECK(trim("  a b \t") == "a b");
    CHECK(trim("   ") == "");
    auto parts = split("a,,b", ',');
    REQUIRE(parts.size() == 3);
    CHECK(parts[0] == "a");
    CHECK(parts[1] == "");
    CHECK(parts[2] == "b");
    CHECK(split("abc", ',').size() == 1);
}

namespace {

const char* kSmallCsv =
    "# toy dataset\n"
    "bag_id,bag_label,instance_label,f1,f2\n"
    "b1,+1,+1,0.1,0.2\n"
    "b2,+1,?,0.5,0.5\n"
    "b1,+1,-1,0.9,0.8\n"
    "\n"
    "b3,-1,-1,0.0,1.0\n";

}  // namespace

TEST_CASE("MIL-CSV parses bags in first-appearance order") {
    Dataset ds = parse_mil_csv(kSmallCsv);
    REQUIRE(ds.bags.size() == 3);
    REQUIRE(ds.dimension == 2);
    CHECK(ds.bags[0].bag_id == "b1");
    CHECK(ds.bags[0].size() == 2);  // interleaved rows regroup
    CHECK(ds.bags[0].bag_label == Label::positive);
    CHECK(ds.bags[0].instances[1].instance_label == Label::negative);
    CHECK(ds.bags[1].instances[0].instance_label == Label::unknown);
    CHECK(ds.bags[2].bag_label == Label::negative);
    CHECK(ds.bags[2].instances[0].features[1] == 1.0);
    CHECK(ds.total_instances() == 4);
}

TEST_CASE("MIL-CSV errors carry the offending line number") {
    auto line_of = [](const char* text) {
        try {
            parse_mil_csv(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return std::size_t(9999);
    };
    CHECK(line_of("b1,+1,+1,0.1\nb1,+1,+1\n") == 2);            // too few fields
    CHECK(line_of("b1,+1,+1,0.1\nb1,+1,+1,0.1,0.2\n") == 2);    // dimension change
    CHECK(line_of("b1,+2,+1,0.1\n") == 1);                      // bad bag label
    CHECK(line_of("b1,+1,pos,0.1\n") == 1);                     // bad instance label
    CHECK(line_of("b1,+1,+1,zero\n") == 1);                     // bad number
    CHECK(line_of("b1,+1,+1,0.1\nb1,-1,+1,0.2\n") == 2);        // bag label flip
    CHECK(line_of("b1,+1,+1,nan\n") == 1);                      // non-finite
    CHECK(line_of("# only comments\n") == 0);                   // empty input
    CHECK(line_of(",+1,+1,0.1\n") == 1);                        // empty bag id
}

TEST_CASE("serialization round-trips bit-exactly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Dataset ds;
    ds.dimension = 3;
    for (int b = 0; b < 4; ++b) {
        Bag bag;
        bag.bag_id = "bag " + std::to_string(b);  // ids may contain spaces
        bag.bag_label = b % 2 ? Label::negative : Label::positive;
        for (int j = 0; j < 3; ++j) {
            Instance inst;
            inst.instance_label = Label::unknown;
            for (int d = 0; d < 3; ++d) inst.features.push_back(u(rng));
            bag.instances.push_back(inst);
        }
        ds.bags.push_back(bag);
    }
    Dataset back = parse_mil_csv(serialize_mil_csv(ds));
    REQUIRE(back.bags.size() == ds.bags.size());
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
        CHECK(back.bags[i].bag_id == ds.bags[i].bag_id);
        CHECK(back.bags[i].bag_label == ds.bags[i].bag_label);
        REQUIRE(back.bags[i].size() == ds.bags[i].size());
        for (std::size_t j = 0; j < ds.bags[i].size(); ++j)
            for (std::size_t d = 0; d < 3; ++d) {
                double a = ds.bags[i].instances[j].features[d];
                double b2 = back.bags[i].instances[j].features[d];
                CHECK(std::memcmp(&a, &b2, sizeof a) == 0);
            }
    }
    // serializing the reparse reproduces the same bytes
    CHECK(serialize_mil_csv(back) == serialize_mil_csv(ds));
}

TEST_CASE("min-max scaling maps training data into the unit box") {
    Dataset ds = parse_mil_csv(
        "b1,+1,?,0.0,5.0,3.0\n"
        "b1,+1,?,10.0,5.0,1.0\n"
        "b2,+1,?,5.0,5.0,2.0\n");
    auto [scaled, params] = scale_features(ds);
    CHECK(scaled.bags[0].instances[0].features[0] == 0.0);
    CHECK(scaled.bags[0].instances[1].features[0] == 1.0);
    CHECK(scaled.bags[1].instances[0].features[0] == 0.5);
    // constant dimension collapses to zero
    CHECK(scaled.bags[0].instances[0].features[1] == 0.0);
    CHECK(scaled.bags[1].instances[0].features[1] == 0.0);
    // foreign data may leave [0,1] and is not clamped
    Dataset outside = parse_mil_csv("t,+1,?,20.0,5.0,0.0\n");
    Dataset mapped = apply_scale(outside, params);
    CHECK(mapped.bags[0].instances[0].features[0] == 2.0);
    CHECK(mapped.bags[0].instances[0].features[2] == -0.5);
    // applying fitted params equals the fitting-time output bitwise
    Dataset again = apply_scale(ds, params);
    CHECK(serialize_mil_csv(again) == serialize_mil_csv(scaled));
}

TEST_CASE("fold splits are stratified, disjoint, and train on positives only") {
    SynthConfig cfg;
    cfg.positive_bags = 13;
    cfg.negative_bags = 7;
    cfg.instances_per_bag = 2;
    cfg.seed = 3;
    Dataset ds = synth_generate(cfg);

    auto splits = split_folds(ds, 4, 99);
    REQUIRE(splits.size() == 4);

    std::map<std::string, Label> label_of;
    for (const auto& bag : ds.bags) label_of[bag.bag_id] = bag.bag_label;

    std::multiset<std::string> all_test;
    for (const auto& s : splits) {
        for (const auto& id : s.test_bag_ids) all_test.insert(id);
        // training side holds positives only, none from the held-out fold
        std::set<std::string> test_ids(s.test_bag_ids.begin(), s.test_bag_ids.end());
        for (const auto& id : s.train_bag_ids) {
            CHECK(label_of.at(id) == Label::positive);
            CHECK_FALSE(test_ids.contains(id));
        }
        // stratification: each fold holds 3-4 positives and 1-2 negatives
        std::size_t pos = 0, neg = 0;
        for (const auto& id : s.test_bag_ids)
            (label_of.at(id) == Label::positive ? pos : neg)++;
        CHECK(pos >= 3);
        CHECK(pos <= 4);
        CHECK(neg >= 1);
        CHECK(neg <= 2);
    }
    // every bag appears in exactly one test fold
    CHECK(all_test.size() == ds.bags.size());
    for (const auto& bag : ds.bags) CHECK(all_test.count(bag.bag_id) == 1);

    // deterministic per seed, different across seeds
    auto splits2 = split_folds(ds, 4, 99);
    for (std::size_t f = 0; f < 4; ++f) {
        CHECK(splits2[f].test_bag_ids == splits[f].test_bag_ids);
        CHECK(splits2[f].train_bag_ids == splits[f].train_bag_ids);
    }
    auto splits3 = split_folds(ds, 4, 100);
    bool any_diff = false;
    for (std::size_t f = 0; f < 4; ++f)
        any_diff = any_diff || splits3[f].test_bag_ids != splits[f].test_bag_ids;
    CHECK(any_diff);

    CHECK_THROWS_AS(split_folds(ds, 1, 0), DataError);
    CHECK_THROWS_AS(split_folds(ds, 8, 0), DataError);  // 7 negatives < 8 folds
}

TEST_CASE("synthetic generation honors shape, labels, and determinism") {
    SynthConfig cfg;
    cfg.positive_bags = 5;
    cfg.negative_bags = 3;
    cfg.instances_per_bag = 4;
    cfg.positives_per_bag = 2;
    cfg.dimension = 3;
    cfg.seed = 17;
    Dataset ds = synth_generate(cfg);

    REQUIRE(ds.bags.size() == 8);
    CHECK(ds.dimension == 3);
    for (std::size_t i = 0; i < 5; ++i) {
        const Bag& bag = ds.bags[i];
        CHECK(bag.bag_id == "p" + std::to_string(i + 1));
        CHECK(bag.bag_label == Label::positive);
        REQUIRE(bag.size() == 4);
        // positives come first within a positive bag
        CHECK(bag.instances[0].instance_label == Label::positive);
        CHECK(bag.instances[1].instance_label == Label::positive);
        CHECK(bag.instances[2].instance_label == Label::negative);
        CHECK(bag.instances[3].instance_label == Label::negative);
    }
    for (std::size_t i = 5; i < 8; ++i) {
        CHECK(ds.bags[i].bag_label == Label::negative);
        for (const auto& inst : ds.bags[i].instances)
            CHECK(inst.instance_label == Label::negative);
    }

    Dataset same = synth_generate(cfg);
    CHECK(serialize_mil_csv(same) == serialize_mil_csv(ds));
    cfg.seed = 18;
    Dataset other = synth_generate(cfg);
    CHECK(serialize_mil_csv(other) != serialize_mil_csv(ds));
}

TEST_CASE("zero spread collapses a cluster onto its center") {
    SynthConfig cfg;
    cfg.positive_bags = 3;
    cfg.negative_bags = 0;
    cfg.instances_per_bag = 2;
    cfg.positives_per_bag = 2;
    cfg.dimension = 2;
    cfg.positive_center = {0.25, 0.75};
    cfg.positive_spread = 0.0;
    Dataset ds = synth_generate(cfg);
    for (const auto& bag : ds.bags)
        for (const auto& inst : bag.instances) {
            CHECK(inst.features[0] == 0.25);
            CHECK(inst.features[1] == 0.75);
        }
}

TEST_CASE("synthetic configuration is validated") {
    SynthConfig cfg;
    cfg.positive_bags = 0;
    cfg.negative_bags = 0;
    CHECK_THROWS_AS(synth_generate(cfg), DataError);
    cfg = {};
    cfg.positives_per_bag = 9;
    cfg.instances_per_bag = 4;
    CHECK_THROWS_AS(synth_generate(cfg), DataError);
    cfg = {};
    cfg.positive_spread = -0.1;
    CHECK_THROWS_AS(synth_generate(cfg), DataError);
    cfg = {};
    cfg.positive_center = {0.5};  // dimension mismatch (default dimension 2)
    CHECK_THROWS_AS(synth_generate(cfg), DataError);
}

TEST_CASE("dataset structural validation rejects broken shapes") {
    Dataset ds = parse_mil_csv("b1,+1,?,0.1\nb2,+1,?,0.2\n");
    CHECK_NOTHROW(validate(ds));
    Dataset bad = ds;
    bad.bags[1].bag_id = "b1";
    CHECK_THROWS_AS(validate(bad), DataError);
    bad = ds;
    bad.bags[0].instances.clear();
    CHECK_THROWS_AS(validate(bad), DataError);
    bad = ds;
    bad.bags[0].instances[0].features.push_back(1.0);
    CHECK_THROWS_AS(validate(bad), DataError);

    CHECK_THROWS_AS(subset_by_ids(ds, {"nope"}), DataError);
    Dataset sub = subset_by_ids(ds, {"b2"});
    REQUIRE(sub.bags.size() == 1);
    CHECK(sub.bags[0].bag_id == "b2");
}
