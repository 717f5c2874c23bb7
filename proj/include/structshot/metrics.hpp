#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"

namespace structshot {

struct PRF {
    double precision = 0, recall = 0, f1 = 0;
};

struct ClassScore {
    PRF prf;
    std::size_t gold = 0, predicted = 0, correct = 0;
};

struct EvalReport {
    PRF micro;
    std::size_t gold = 0, predicted = 0, correct = 0;
    std::map<std::string, ClassScore> per_class;
};

struct AggregateReport {
    double mean_f1 = 0;
    double std_f1 = 0;
    std::vector<EvalReport> runs;
};

/// Rates with a zero denominator are 0; F1 of P = R = 0 is 0.
inline PRF prf_from_counts(std::size_t correct, std::size_t predicted, std::size_t gold) {
    PRF r;
    r.precision = predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
    r.recall = gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
    const double denom = r.precision + r.recall;
    r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / denom;
    return r;
}

/// Exact-boundary span matching pooled over classes. `pred` is read under
/// `pred_scheme`, gold under each sentence's own scheme.
inline EvalReport span_micro_f1(const Corpus& gold, const std::vector<std::vector<TagLabel>>& pred,
                                TagScheme pred_scheme = TagScheme::IO) {
    if (gold.size() != pred.size())
        throw Error("span_micro_f1: " + std::to_string(gold.size()) + " gold sentences vs " +
                    std::to_string(pred.size()) + " predictions");
    EvalReport rep;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i].size() != pred[i].size())
            throw Error("span_micro_f1: sentence " + std::to_string(i) + " has " + std::to_string(gold[i].size()) +
                        " gold tags vs " + std::to_string(pred[i].size()) + " predicted");
        auto g = to_spans(gold[i]);
        auto p = to_spans(pred[i], pred_scheme);
        std::set<EntitySpan> gset(g.begin(), g.end());
        for (const auto& sp : g) ++rep.per_class[sp.cls].gold;
        for (const auto& sp : p) {
            auto& cs = rep.per_class[sp.cls];
            ++cs.predicted;
            if (gset.count(sp) != 0) ++cs.correct;
        }
    }
    for (auto& [cls, cs] : rep.per_class) {
        cs.prf = prf_from_counts(cs.correct, cs.predicted, cs.gold);
        rep.gold += cs.gold;
        rep.predicted += cs.predicted;
        rep.correct += cs.correct;
    }
    rep.micro = prf_from_counts(rep.correct, rep.predicted, rep.gold);
    return rep;
}

/// Mean and sample (n-1) standard deviation of micro F1.
inline AggregateReport aggregate(std::vector<EvalReport> reports) {
    if (reports.empty()) throw Error("aggregate: no reports");
    AggregateReport agg;
    const double n = static_cast<double>(reports.size());
    double sum = 0;
    for (const auto& r : reports) sum += r.micro.f1;
    agg.mean_f1 = sum / n;
    if (reports.size() > 1) {
        double ss = 0;
        for (const auto& r : reports) ss += (r.micro.f1 - agg.mean_f1) * (r.micro.f1 - agg.mean_f1);
        agg.std_f1 = std::sqrt(ss / (n - 1.0));
    }
    agg.runs = std::move(reports);
    return agg;
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace detail

/// "mean ± std" in percent, one decimal, the way results tables print F1.
inline std::string format_mean_std(const AggregateReport& agg) {
    return detail::fmt(100.0 * agg.mean_f1, "%.1f") + "\xC2\xB1" + detail::fmt(100.0 * agg.std_f1, "%.1f");
}

/// Text table: one row per condition, plus per-run micro scores.
inline std::string render_table(const std::vector<std::pair<std::string, AggregateReport>>& conditions) {
    std::ostringstream os;
    std::size_t w = 9;
    for (const auto& [name, agg] : conditions) w = std::max(w, name.size());
    auto pad = [&](const std::string& s) { return s + std::string(w - s.size() + 2, ' '); };
    os << pad("Condition") << "F1 (mean\xC2\xB1std)  runs\n";
    for (const auto& [name, agg] : conditions)
        os << pad(name) << format_mean_std(agg) << "        " << agg.runs.size() << "\n";
    return os.str();
}

inline void write_report_kv(std::ostream& os, const EvalReport& r, const std::string& prefix) {
    os << prefix << "precision=" << detail::fmt(r.micro.precision) << "\n";
    os << prefix << "recall=" << detail::fmt(r.micro.recall) << "\n";
    os << prefix << "f1=" << detail::fmt(r.micro.f1) << "\n";
    os << prefix << "gold=" << r.gold << "\n" << prefix << "predicted=" << r.predicted << "\n";
    os << prefix << "correct=" << r.correct << "\n";
    for (const auto& [c, cs] : r.per_class) {
        const std::string p = prefix + "class." + c + ".";
        os << p << "precision=" << detail::fmt(cs.prf.precision) << "\n";
        os << p << "recall=" << detail::fmt(cs.prf.recall) << "\n";
        os << p << "f1=" << detail::fmt(cs.prf.f1) << "\n";
        os << p << "gold=" << cs.gold << "\n" << p << "predicted=" << cs.predicted << "\n";
        os << p << "correct=" << cs.correct << "\n";
    }
}

/// Machine-readable key=value report.
inline std::string render_kv(const AggregateReport& agg) {
    std::ostringstream os;
    os << "runs=" << agg.runs.size() << "\n";
    os << "mean_f1=" << detail::fmt(agg.mean_f1) << "\n";
    os << "std_f1=" << detail::fmt(agg.std_f1) << "\n";
    for (std::size_t i = 0; i < agg.runs.size(); ++i) write_report_kv(os, agg.runs[i], "run." + std::to_string(i) + ".");
    return os.str();
}

inline std::string render_kv(const EvalReport& r) {
    std::ostringstream os;
    write_report_kv(os, r, "");
    return os.str();
}

}  // namespace structshot
