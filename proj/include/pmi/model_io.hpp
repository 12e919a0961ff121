// Model persistence: a line-oriented text format carrying the kernel spec,
// offset, flattened (weight, point) expansion, nu, and termination metadata.
// Floats are written with 17 significant digits so a load reproduces decision
// values bit-identically. Training-time diagnostics that the decision
// function does not need (dual vector, bag roles) are not persisted.
#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pmi/dataset.hpp"
#include "pmi/format.hpp"
#include "pmi/pmi.hpp"

namespace pmi {

struct SavedModel {
    PmiModel pmi;
    std::optional<ScaleParams> scale;
};

inline void save_model(std::ostream& out, const PmiModel& m,
                       const std::optional<ScaleParams>& scale = std::nullopt) {
    out << "pmi-model 1\n";
    out << "kernel " << m.model.kernel.str() << '\n';
    out << "nu " << format_double(m.model.nu) << '\n';
    out << "upper " << format_double(m.model.upper) << '\n';
    out << "rho " << format_double(m.model.rho) << '\n';
    out << "dimension " << m.model.dimension << '\n';
    out << "retrained " << (m.model.retrained ? 1 : 0) << '\n';
    out << "converged " << (m.model.converged ? 1 : 0) << '\n';
    out << "termination " << termination_token(m.termination) << '\n';
    out << "passes " << m.passes << '\n';
    out << "queries " << m.query_log.size() << '\n';
    for (const auto& q : m.query_log) {
        out << "query " << q.pass << ' ' << q.bag << ' ' << q.instance << ' '
            << format_double(q.value) << ' ' << label_token(q.answer) << ' ' << q.bag_id << '\n';
    }
    out << "expansion " << m.model.expansion.size() << '\n';
    for (const auto& wp : m.model.expansion) {
        out << format_double(wp.weight);
        for (double v : wp.point) out << ' ' << format_double(v);
        out << '\n';
    }
    if (scale) {
        out << "scale " << scale->min.size() << '\n';
        for (std::size_t d = 0; d < scale->min.size(); ++d)
            out << format_double(scale->min[d]) << ' ' << format_double(scale->max[d]) << '\n';
    }
    out << "end\n";
}

inline std::string save_model_string(const PmiModel& m,
                                     const std::optional<ScaleParams>& scale = std::nullopt) {
    std::ostringstream out;
    save_model(out, m, scale);
    return out.str();
}

inline SavedModel load_model(std::istream& in) {
    SavedModel sm;
    OneClassModel& model = sm.pmi.model;
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> std::string_view {
        if (!std::getline(in, line)) throw ParseError(line_no, "model file ended unexpectedly");
        ++line_no;
        return trim(line);
    };
    auto expect_kv = [&](std::string_view key) -> std::string_view {
        auto row = next_line();
        if (row.substr(0, key.size()) != key || row.size() <= key.size() ||
            row[key.size()] != ' ')
            throw ParseError(line_no, "expected '" + std::string(key) + " ...'");
        return trim(row.substr(key.size() + 1));
    };
    auto parse_num = [&](std::string_view text) {
        double v;
        if (!parse_double(text, v))
            throw ParseError(line_no, "unparsable number '" + std::string(text) + "'");
        return v;
    };
    auto parse_count = [&](std::string_view text) {
        std::size_t v;
        if (!parse_size(text, v))
            throw ParseError(line_no, "unparsable count '" + std::string(text) + "'");
        return v;
    };

    if (next_line() != "pmi-model 1") throw ParseError(line_no, "not a pmi-model version 1 file");
    try {
        model.kernel = KernelSpec::parse(expect_kv("kernel"));
    } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, e.what());
    }
    model.nu = parse_num(expect_kv("nu"));
    model.upper = parse_num(expect_kv("upper"));
    model.rho = parse_num(expect_kv("rho"));
    model.dimension = parse_count(expect_kv("dimension"));
    model.retrained = expect_kv("retrained") == "1";
    model.converged = expect_kv("converged") == "1";
    auto reason = termination_from_token(expect_kv("termination"));
    if (!reason) throw ParseError(line_no, "unknown termination reason");
    sm.pmi.termination = *reason;
    sm.pmi.passes = parse_count(expect_kv("passes"));

    const std::size_t n_queries = parse_count(expect_kv("queries"));
    for (std::size_t q = 0; q < n_queries; ++q) {
        auto row = next_line();
        auto fields = split(row, ' ');
        if (fields.size() < 7 || fields[0] != "query")
            throw ParseError(line_no, "malformed query record");
        QueryRecord rec;
        rec.pass = parse_count(fields[1]);
        rec.bag = parse_count(fields[2]);
        rec.instance = parse_count(fields[3]);
        rec.value = parse_num(fields[4]);
        auto answer = label_from_token(fields[5]);
        if (!answer) throw ParseError(line_no, "bad query answer token");
        rec.answer = *answer;
        // bag id comes last so it may contain spaces
        rec.bag_id = std::string(row.substr(fields[6].data() - row.data()));
        sm.pmi.query_log.push_back(std::move(rec));
    }

    const std::size_t n_terms = parse_count(expect_kv("expansion"));
    model.expansion.reserve(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) {
        auto fields = split(next_line(), ' ');
        if (fields.size() != model.dimension + 1)
            throw ParseError(line_no, "expansion record needs weight plus " +
                                          std::to_string(model.dimension) + " coordinates");
        WeightedPoint wp;
        wp.weight = parse_num(fields[0]);
        wp.point.reserve(model.dimension);
        for (std::size_t d = 1; d < fields.size(); ++d) wp.point.push_back(parse_num(fields[d]));
        model.expansion.push_back(std::move(wp));
    }

    auto tail = next_line();
    if (tail.rfind("scale ", 0) == 0) {
        std::size_t dims = parse_count(trim(tail.substr(6)));
        ScaleParams sp;
        for (std::size_t d = 0; d < dims; ++d) {
            auto fields = split(next_line(), ' ');
            if (fields.size() != 2) throw ParseError(line_no, "scale record needs min and max");
            sp.min.push_back(parse_num(fields[0]));
            sp.max.push_back(parse_num(fields[1]));
        }
        sm.scale = std::move(sp);
        tail = next_line();
    }
    if (tail != "end") throw ParseError(line_no, "missing 'end' terminator");
    return sm;
}

inline SavedModel load_model_string(const std::string& text) {
    std::istringstream in(text);
    return load_model(in);
}

}  // namespace pmi
