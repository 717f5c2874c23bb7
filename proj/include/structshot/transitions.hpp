#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/knn.hpp"

namespace structshot {

/// Transition counts between the abstract tags O, I, I-Other plus sentence
/// boundaries. I -> I-Other means an entity of one class followed directly
/// by an entity of another.
struct TransitionCounts {
    std::size_t start_o = 0, start_i = 0;
    std::size_t o_o = 0, o_i = 0, o_end = 0;
    std::size_t i_o = 0, i_i = 0, i_other = 0, i_end = 0;

    std::size_t total() const noexcept {
        return start_o + start_i + o_o + o_i + o_end + i_o + i_i + i_other + i_end;
    }

    TransitionCounts& operator+=(const TransitionCounts& o) noexcept {
        start_o += o.start_o, start_i += o.start_i;
        o_o += o.o_o, o_i += o.o_i, o_end += o.o_end;
        i_o += o.i_o, i_i += o.i_i, i_other += o.i_other, i_end += o.i_end;
        return *this;
    }

    friend bool operator==(const TransitionCounts&, const TransitionCounts&) = default;
};

inline TransitionCounts count_abstract(const TaggedSentence& s) {
    if (s.scheme != TagScheme::IO) throw Error("count_abstract: corpus must be IO tagged; convert with to_io first");
    TransitionCounts c;
    if (s.tags.empty()) return c;
    (s.tags.front().is_outside() ? c.start_o : c.start_i)++;
    for (std::size_t t = 1; t < s.tags.size(); ++t) {
        const TagLabel& prev = s.tags[t - 1];
        const TagLabel& cur = s.tags[t];
        if (prev.is_outside()) {
            (cur.is_outside() ? c.o_o : c.o_i)++;
        } else if (cur.is_outside()) {
            ++c.i_o;
        } else {
            (prev.cls == cur.cls ? c.i_i : c.i_other)++;
        }
    }
    (s.tags.back().is_outside() ? c.o_end : c.i_end)++;
    return c;
}

inline TransitionCounts count_abstract(const Corpus& corpus) {
    TransitionCounts total;
    for (const auto& s : corpus) total += count_abstract(s);
    return total;
}

struct AbstractTransitions {
    struct StartRow {
        double o = 0, i = 0;
    };
    struct ORow {
        double o = 0, i = 0, end = 0;
    };
    struct IRow {
        double o = 0, i = 0, other = 0, end = 0;
    };
    StartRow from_start;
    ORow from_o;
    IRow from_i;
};

enum class EstimationMode {
    /// p(Y|X) = N(X->Y) / N(X->.), row-stochastic.
    RowNormalized,
    /// p(Y|X) = N(X->Y) / N(.->Y), normalized by incoming mass; rows need not sum to 1.
    IncomingNormalized,
};

inline const char* to_string(EstimationMode m) {
    return m == EstimationMode::RowNormalized ? "row" : "incoming";
}

inline EstimationMode parse_estimation_mode(const std::string& s) {
    if (s == "row") return EstimationMode::RowNormalized;
    if (s == "incoming" || s == "literal") return EstimationMode::IncomingNormalized;
    throw Error("unknown transition estimation mode '" + s + "' (expected row or incoming)");
}

/// Rows without outgoing counts fall back to uniform over their legal successors.
inline AbstractTransitions estimate_abstract(const TransitionCounts& c,
                                             EstimationMode mode = EstimationMode::RowNormalized) {
    if (c.total() == 0) throw Error("estimate_abstract: no transitions counted");
    AbstractTransitions a;
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };

    const std::size_t out_start = c.start_o + c.start_i;
    const std::size_t out_o = c.o_o + c.o_i + c.o_end;
    const std::size_t out_i = c.i_o + c.i_i + c.i_other + c.i_end;

    if (mode == EstimationMode::RowNormalized) {
        a.from_start = {ratio(c.start_o, out_start), ratio(c.start_i, out_start)};
        a.from_o = {ratio(c.o_o, out_o), ratio(c.o_i, out_o), ratio(c.o_end, out_o)};
        a.from_i = {ratio(c.i_o, out_i), ratio(c.i_i, out_i), ratio(c.i_other, out_i), ratio(c.i_end, out_i)};
    } else {
        const std::size_t in_o = c.start_o + c.o_o + c.i_o;
        const std::size_t in_i = c.start_i + c.o_i + c.i_i;
        const std::size_t in_other = c.i_other;
        const std::size_t in_end = c.o_end + c.i_end;
        a.from_start = {ratio(c.start_o, in_o), ratio(c.start_i, in_i)};
        a.from_o = {ratio(c.o_o, in_o), ratio(c.o_i, in_i), ratio(c.o_end, in_end)};
        a.from_i = {ratio(c.i_o, in_o), ratio(c.i_i, in_i), ratio(c.i_other, in_other), ratio(c.i_end, in_end)};
    }

    if (out_start == 0) a.from_start = {1.0 / 2, 1.0 / 2};
    if (out_o == 0) a.from_o = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    if (out_i == 0) a.from_i = {1.0 / 4, 1.0 / 4, 1.0 / 4, 1.0 / 4};
    return a;
}

/// Transition matrix over a concrete tag set. Rows are START and every state
/// of `states`; columns are every state plus END. Row i of the state block is
/// matrix[i * S .. i * S + S) followed by end[i].
struct ExpandedTransitions {
    StateSpace states;
    std::vector<double> start;   // S
    std::vector<double> matrix;  // S x S, row-major
    std::vector<double> end;     // S
    double tau = 1.0;
    EstimationMode mode = EstimationMode::RowNormalized;

    std::size_t size() const noexcept { return states.size(); }
    double at(std::size_t from, std::size_t to) const { return matrix.at(from * size() + to); }
    double& at(std::size_t from, std::size_t to) { return matrix.at(from * size() + to); }

    double row_sum(std::size_t from) const {
        double s = end.at(from);
        for (std::size_t j = 0; j < size(); ++j) s += at(from, j);
        return s;
    }
    double start_sum() const {
        double s = 0;
        for (double p : start) s += p;
        return s;
    }
};

/// Distributes each abstract probability evenly over the concrete
/// transitions it stands for. With one class the I-Other mass has nowhere to
/// go and is folded into the self transition.
inline ExpandedTransitions expand(const AbstractTransitions& a, std::vector<std::string> classes,
                                  Warnings* warnings = nullptr) {
    const std::size_t n = classes.size();
    if (n < 1) throw Error("expand: need at least one target class");
    ExpandedTransitions e;
    e.states.classes = std::move(classes);
    const std::size_t s = n + 1;
    const double dn = static_cast<double>(n);
    e.start.assign(s, 0.0);
    e.matrix.assign(s * s, 0.0);
    e.end.assign(s, 0.0);

    e.start[0] = a.from_start.o;
    for (std::size_t c = 1; c < s; ++c) e.start[c] = a.from_start.i / dn;

    e.at(0, 0) = a.from_o.o;
    for (std::size_t c = 1; c < s; ++c) e.at(0, c) = a.from_o.i / dn;
    e.end[0] = a.from_o.end;

    double self = a.from_i.i;
    double cross = 0.0;
    if (n == 1) {
        self += a.from_i.other;
        if (a.from_i.other != 0.0)
            warn(warnings, "expand: single target class, I-Other mass " + std::to_string(a.from_i.other) +
                               " folded into the self transition");
    } else {
        cross = a.from_i.other / static_cast<double>(n - 1);
    }
    for (std::size_t c = 1; c < s; ++c) {
        e.at(c, 0) = a.from_i.o;
        for (std::size_t c2 = 1; c2 < s; ++c2) e.at(c, c2) = c == c2 ? self : cross;
        e.end[c] = a.from_i.end;
    }
    return e;
}

/// Every transition equally likely, START included.
inline ExpandedTransitions uniform_transitions(std::vector<std::string> classes) {
    ExpandedTransitions e;
    e.states.classes = std::move(classes);
    const std::size_t s = e.size();
    e.start.assign(s, 1.0 / static_cast<double>(s));
    e.matrix.assign(s * s, 1.0 / static_cast<double>(s + 1));
    e.end.assign(s, 1.0 / static_cast<double>(s + 1));
    return e;
}

namespace detail {

/// p -> p^tau then renormalize; zeros stay zero; an all-zero row becomes uniform.
inline void temper_row(std::vector<double*> cells, double tau) {
    double sum = 0.0;
    for (double* p : cells) {
        if (*p > 0.0) *p = std::pow(*p, tau);
        sum += *p;
    }
    for (double* p : cells) *p = sum > 0.0 ? *p / sum : 1.0 / static_cast<double>(cells.size());
}

}  // namespace detail

inline ExpandedTransitions apply_temperature(ExpandedTransitions m, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("apply_temperature: tau must be a positive finite number");
    const std::size_t s = m.size();
    {
        std::vector<double*> row;
        for (auto& p : m.start) row.push_back(&p);
        detail::temper_row(row, tau);
    }
    for (std::size_t i = 0; i < s; ++i) {
        std::vector<double*> row;
        for (std::size_t j = 0; j < s; ++j) row.push_back(&m.at(i, j));
        row.push_back(&m.end[i]);
        detail::temper_row(row, tau);
    }
    m.tau *= tau;
    return m;
}

// ---------------------------------------------------------------------------
// Text matrix file:
//   # comment
//   classes=LOC PER
//   tau=0.01
//   mode=row
//   START <p(O)> <p(I-LOC)> <p(I-PER)> <p(END)=0>
//   O     ...                          <p(END)>
//   I-LOC ...
//   I-PER ...

inline std::string write_transitions(const ExpandedTransitions& m) {
    std::ostringstream os;
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "# columns: O";
    for (const auto& c : m.states.classes) os << " I-" << c;
    os << " END\n";
    os << "classes=";
    for (std::size_t i = 0; i < m.states.classes.size(); ++i) os << (i ? " " : "") << m.states.classes[i];
    os << "\ntau=" << num(m.tau) << "\nmode=" << to_string(m.mode) << "\n";
    os << "START";
    for (double p : m.start) os << ' ' << num(p);
    os << " 0\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << m.states.label(i).str();
        for (std::size_t j = 0; j < m.size(); ++j) os << ' ' << num(m.at(i, j));
        os << ' ' << num(m.end[i]) << '\n';
    }
    return os.str();
}

/// Parses a matrix file, including hand-written priors. Row-mode matrices
/// must be row-stochastic within 1e-6.
inline ExpandedTransitions read_transitions(const std::string& text) {
    ExpandedTransitions m;
    bool have_classes = false;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> row_labels;
    std::vector<std::size_t> row_lines;

    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq != std::string::npos) {
            std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "classes") {
                std::istringstream cs(val);
                std::string c;
                while (cs >> c) m.states.classes.push_back(c);
                have_classes = true;
            } else if (key == "tau") {
                try {
                    m.tau = std::stod(val);
                } catch (const std::exception&) {
                    throw ParseError(line_no, "bad tau '" + val + "'");
                }
            } else if (key == "mode") {
                try {
                    m.mode = parse_estimation_mode(val);
                } catch (const Error& e) {
                    throw ParseError(line_no, e.what());
                }
            } else {
                throw ParseError(line_no, "unknown key '" + key + "'");
            }
            continue;
        }
        std::istringstream ls(line);
        std::string label;
        ls >> label;
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                if (!std::isfinite(v) || v < 0.0) throw ParseError(line_no, "probability must be finite and >= 0");
                vals.push_back(v);
            } catch (const std::logic_error&) {
                throw ParseError(line_no, "bad probability '" + tok + "'");
            }
        }
        row_labels.push_back(label);
        rows.push_back(std::move(vals));
        row_lines.push_back(line_no);
    }
    if (!have_classes || m.states.classes.empty()) throw Error("transition file lacks a non-empty classes= line");
    const std::size_t s = m.size();
    if (rows.size() != s + 1)
        throw Error("transition file has " + std::to_string(rows.size()) + " rows, expected " + std::to_string(s + 1));

    m.start.assign(s, 0.0);
    m.matrix.assign(s * s, 0.0);
    m.end.assign(s, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string want = r == 0 ? "START" : m.states.label(r - 1).str();
        if (row_labels[r] != want) throw ParseError(row_lines[r], "expected row '" + want + "', got '" + row_labels[r] + "'");
        if (rows[r].size() != s + 1)
            throw ParseError(row_lines[r], "expected " + std::to_string(s + 1) + " values, got " +
                                               std::to_string(rows[r].size()));
        if (r == 0) {
            if (rows[r][s] != 0.0) throw ParseError(row_lines[r], "START -> END must be 0");
            for (std::size_t j = 0; j < s; ++j) m.start[j] = rows[r][j];
        } else {
            for (std::size_t j = 0; j < s; ++j) m.at(r - 1, j) = rows[r][j];
            m.end[r - 1] = rows[r][s];
        }
    }
    if (m.mode == EstimationMode::RowNormalized) {
        if (std::abs(m.start_sum() - 1.0) > 1e-6) throw Error("transition file: START row does not sum to 1");
        for (std::size_t i = 0; i < s; ++i)
            if (std::abs(m.row_sum(i) - 1.0) > 1e-6)
                throw Error("transition file: row " + m.states.label(i).str() + " does not sum to 1");
    }
    return m;
}

}  // namespace structshot
