#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/embed.hpp"
#include "structshot/sampler.hpp"

namespace structshot {

/// Tag state space shared by the classifier and the decoder: state 0 is O,
/// state i (1..N) is I-classes[i-1].
struct StateSpace {
    std::vector<std::string> classes;

    std::size_t size() const noexcept { return classes.size() + 1; }

    TagLabel label(std::size_t state) const {
        if (state == 0) return TagLabel::outside();
        return TagLabel::inside(classes.at(state - 1));
    }

    /// O maps to 0; I-c and B-c both map to c's state. Throws if c is unknown.
    std::size_t state_of(const TagLabel& tag) const {
        if (tag.is_outside()) return 0;
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == tag.cls) return i + 1;
        throw Error("class '" + tag.cls + "' is not in the state space");
    }

    friend bool operator==(const StateSpace&, const StateSpace&) = default;
};

using TokenVectors = std::vector<std::span<const double>>;

inline TokenVectors token_vectors(const EmbeddingTable& table, std::size_t sentence) {
    TokenVectors out;
    for (std::size_t t = 0; t < table.num_tokens(sentence); ++t) out.push_back(table.vec(sentence, t));
    return out;
}

inline double sq_euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw Error("sq_euclidean: dimension mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

/// Labeled support tokens grouped by state. Begin and Inside tags of one
/// class share a bucket.
class SupportIndex {
public:
    struct Entry {
        std::vector<double> vector;
        std::size_t state;
    };

    /// `rows[i]` is the table row holding sentences[i]'s vectors. If
    /// `classes` is empty the support's own tag-set order is used. Every
    /// listed class must have at least one support token, and every support
    /// entity must belong to a listed class.
    static SupportIndex build(const Corpus& sentences, std::span<const std::size_t> rows, const EmbeddingTable& table,
                              std::vector<std::string> classes = {}) {
        if (rows.size() != sentences.size()) throw Error("support index: rows and sentences differ in length");
        if (classes.empty()) classes = compute_tag_set(sentences).classes;
        SupportIndex idx;
        idx.states_.classes = std::move(classes);
        idx.by_state_.assign(idx.states_.size(), {});
        idx.dim_ = table.dim();
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            const auto& s = sentences[i];
            if (rows[i] >= table.num_sentences() || table.num_tokens(rows[i]) != s.size())
                throw Error("support index: missing or misaligned embeddings for support sentence " +
                            std::to_string(i));
            for (std::size_t t = 0; t < s.size(); ++t) {
                std::size_t state = idx.states_.state_of(s.tags[t]);
                auto v = table.vec(rows[i], t);
                idx.by_state_[state].push_back(idx.entries_.size());
                idx.entries_.push_back(Entry{std::vector<double>(v.begin(), v.end()), state});
            }
        }
        if (idx.entries_.empty()) throw Error("support index: no support tokens");
        for (std::size_t c = 1; c < idx.states_.size(); ++c)
            if (idx.by_state_[c].empty())
                throw Error("support index: class '" + idx.states_.classes[c - 1] + "' has no support tokens");
        return idx;
    }

    /// Support sentences aligned 1:1 with the table's rows.
    static SupportIndex build(const Corpus& sentences, const EmbeddingTable& table,
                              std::vector<std::string> classes = {}) {
        std::vector<std::size_t> rows(sentences.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return build(sentences, rows, table, std::move(classes));
    }

    /// Support set drawn from a pool whose vectors are in `pool_table`.
    static SupportIndex build(const SupportSet& support, const EmbeddingTable& pool_table,
                              std::vector<std::string> classes = {}) {
        return build(support.sentences, support.source_ids, pool_table, std::move(classes));
    }

    const StateSpace& states() const noexcept { return states_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    const std::vector<std::size_t>& bucket(std::size_t state) const { return by_state_.at(state); }
    std::size_t dim() const noexcept { return dim_; }

private:
    StateSpace states_;
    std::vector<Entry> entries_;
    std::vector<std::vector<std::size_t>> by_state_;
    std::size_t dim_ = 0;
};

/// Per state, the minimum squared distance from `query` to that state's
/// support tokens; +inf for a state without tokens (only O can be empty).
inline std::vector<double> class_distances(std::span<const double> query, const SupportIndex& index) {
    if (index.entries().empty()) throw Error("class_distances: empty support index");
    std::vector<double> d(index.states().size(), std::numeric_limits<double>::infinity());
    for (const auto& e : index.entries()) {
        const double dist = sq_euclidean(query, e.vector);
        if (dist < d[e.state]) d[e.state] = dist;
    }
    return d;
}

/// Lowest-index state among the minimal distances (O first, then class order).
inline std::size_t argmin_state(const std::vector<double>& dists) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < dists.size(); ++s)
        if (dists[s] < dists[best]) best = s;
    return best;
}

inline std::size_t nearest_state(std::span<const double> query, const SupportIndex& index) {
    return argmin_state(class_distances(query, index));
}

inline TagLabel nearest_tag(std::span<const double> query, const SupportIndex& index) {
    return index.states().label(nearest_state(query, index));
}

struct EmissionRow {
    std::vector<double> probs;
    std::vector<double> log_probs;
    std::vector<double> min_dists;
};

/// Softmax over negative class distances, shifted by the minimum distance.
inline EmissionRow emissions_from_distances(std::vector<double> dists) {
    if (dists.empty()) throw Error("emissions: no states");
    const double dmin = dists[argmin_state(dists)];
    EmissionRow row;
    row.min_dists = std::move(dists);
    const std::size_t n = row.min_dists.size();
    std::vector<double> shifted(n);
    double z = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        shifted[s] = -(row.min_dists[s] - dmin);  // -inf for empty states
        z += std::exp(shifted[s]);
    }
    const double log_z = std::log(z);
    row.probs.resize(n);
    row.log_probs.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        row.log_probs[s] = shifted[s] - log_z;
        row.probs[s] = std::exp(shifted[s]) / z;
    }
    return row;
}

inline EmissionRow emissions(std::span<const double> query, const SupportIndex& index) {
    return emissions_from_distances(class_distances(query, index));
}

inline std::vector<EmissionRow> sentence_emissions(const TokenVectors& tokens, const SupportIndex& index) {
    std::vector<EmissionRow> rows;
    rows.reserve(tokens.size());
    for (auto v : tokens) rows.push_back(emissions(v, index));
    return rows;
}

/// Independent per-token nearest-neighbor tagging.
inline std::vector<TagLabel> nnshot_predict(const TokenVectors& tokens, const SupportIndex& index) {
    std::vector<TagLabel> out;
    out.reserve(tokens.size());
    for (auto v : tokens) out.push_back(nearest_tag(v, index));
    return out;
}

}  // namespace structshot
