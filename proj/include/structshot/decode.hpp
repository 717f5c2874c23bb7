#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/knn.hpp"
#include "structshot/transitions.hpp"

namespace structshot {

struct DecodingConfig {
    double tau = 1.0;
    /// false decodes each token independently (plain nearest neighbor).
    bool use_transitions = true;
};

struct DecodeResult {
    std::vector<std::size_t> states;
    /// Sum of log emissions and log transitions (START and END included);
    /// -inf when the decoder fell back to per-token argmax.
    double log_score = 0.0;
    bool fell_back = false;
};

namespace detail {

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

inline std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace detail

/// Max-product decoding in log space with backpointers. Ties go to the lower
/// state index. If every path has zero probability the per-token emission
/// argmax is returned and a warning recorded.
inline DecodeResult viterbi_path(const std::vector<EmissionRow>& rows, const ExpandedTransitions& trans,
                                 Warnings* warnings = nullptr) {
    const std::size_t s = trans.size();
    const std::size_t len = rows.size();
    if (len == 0) throw Error("viterbi: empty sentence");
    for (const auto& r : rows)
        if (r.log_probs.size() != s)
            throw Error("viterbi: emission row covers " + std::to_string(r.log_probs.size()) +
                        " states but transitions cover " + std::to_string(s));

    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> log_trans(s * s);
    for (std::size_t i = 0; i < s * s; ++i) log_trans[i] = detail::safe_log(trans.matrix[i]);

    std::vector<double> delta(s), next(s);
    std::vector<std::size_t> back(len * s, 0);
    for (std::size_t j = 0; j < s; ++j) delta[j] = detail::safe_log(trans.start[j]) + rows[0].log_probs[j];

    for (std::size_t t = 1; t < len; ++t) {
        for (std::size_t j = 0; j < s; ++j) {
            double best = neg_inf;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < s; ++i) {
                const double cand = delta[i] + log_trans[i * s + j];
                if (cand > best) {
                    best = cand;
                    arg = i;
                }
            }
            back[t * s + j] = arg;
            next[j] = best + rows[t].log_probs[j];
        }
        delta.swap(next);
    }

    double best = neg_inf;
    std::size_t last = 0;
    for (std::size_t j = 0; j < s; ++j) {
        const double cand = delta[j] + detail::safe_log(trans.end[j]);
        if (cand > best) {
            best = cand;
            last = j;
        }
    }

    DecodeResult res;
    res.states.resize(len);
    if (best == neg_inf) {
        warn(warnings, "viterbi: every path has zero probability, using per-token emission argmax");
        for (std::size_t t = 0; t < len; ++t) res.states[t] = detail::argmax_lowest(rows[t].log_probs);
        res.log_score = neg_inf;
        res.fell_back = true;
        return res;
    }
    res.log_score = best;
    res.states[len - 1] = last;
    for (std::size_t t = len - 1; t > 0; --t) res.states[t - 1] = back[t * s + res.states[t]];
    return res;
}

inline std::vector<TagLabel> viterbi(const std::vector<EmissionRow>& rows, const ExpandedTransitions& trans,
                                     Warnings* warnings = nullptr) {
    auto res = viterbi_path(rows, trans, warnings);
    std::vector<TagLabel> out;
    out.reserve(res.states.size());
    for (std::size_t st : res.states) out.push_back(trans.states.label(st));
    return out;
}

/// Log-score of a fixed state path under the decoding objective.
inline double path_log_score(const std::vector<EmissionRow>& rows, const ExpandedTransitions& trans,
                             const std::vector<std::size_t>& path) {
    if (path.size() != rows.size() || path.empty()) throw Error("path_log_score: length mismatch");
    const std::size_t s = trans.size();
    double score = detail::safe_log(trans.start.at(path[0])) + rows[0].log_probs.at(path[0]);
    for (std::size_t t = 1; t < path.size(); ++t)
        score += detail::safe_log(trans.matrix.at(path[t - 1] * s + path[t])) + rows[t].log_probs.at(path[t]);
    return score + detail::safe_log(trans.end.at(path.back()));
}

}  // namespace structshot
