#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/rng.hpp"

namespace structshot {

/// A K-shot support set drawn from a sentence pool.
struct SupportSet {
    Corpus sentences;
    std::size_t k = 1;
    std::uint64_t seed = 0;
    /// Entity-span counts over `sentences` for every class of the pool's tag set.
    std::map<std::string, std::size_t> counts;
    /// Pool indices of `sentences`, in selection order.
    std::vector<std::size_t> source_ids;
    /// Order in which classes were visited (ascending pool frequency).
    std::vector<std::string> class_order;
    /// Classes that ran out of candidate sentences before reaching k.
    std::map<std::string, std::size_t> shortfalls;

    friend bool operator==(const SupportSet&, const SupportSet&) = default;
};

struct Episode {
    SupportSet support;
    Corpus test;
    std::vector<std::size_t> test_ids;
    /// Classes the test draw could not bring to k spans.
    std::map<std::string, std::size_t> test_shortfalls;
};

namespace detail {

struct GreedyDraw {
    std::vector<std::size_t> ids;
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> class_order;
    std::map<std::string, std::size_t> shortfalls;
};

/// Greedy class-frequency-ordered draw restricted to `candidates` (pool
/// indices). Classes are visited in ascending frequency over the candidates;
/// for each class, sentences containing it are drawn uniformly without
/// replacement until its span count reaches k. Every drawn sentence updates
/// the counts of all classes it contains. Stops early once `max_sentences`
/// sentences are selected (0 means no cap).
inline GreedyDraw greedy_draw(const Corpus& pool, const std::vector<std::size_t>& candidates, std::size_t k,
                              Xorshift64Star& rng, std::size_t max_sentences = 0) {
    std::vector<std::map<std::string, std::size_t>> per_sentence(pool.size());
    std::map<std::string, std::size_t> freq;
    for (std::size_t id : candidates) {
        for (const auto& span : to_spans(pool[id])) ++per_sentence[id][span.cls];
        for (const auto& [c, n] : per_sentence[id]) freq[c] += n;
    }

    GreedyDraw draw;
    draw.class_order = order_by_frequency(freq);
    for (const auto& c : draw.class_order) draw.counts[c] = 0;

    std::vector<bool> taken(pool.size(), false);
    auto capped = [&] { return max_sentences != 0 && draw.ids.size() >= max_sentences; };

    for (const auto& cls : draw.class_order) {
        while (draw.counts[cls] < k && !capped()) {
            std::vector<std::size_t> eligible;
            for (std::size_t id : candidates)
                if (!taken[id] && per_sentence[id].count(cls) != 0) eligible.push_back(id);
            if (eligible.empty()) {
                draw.shortfalls[cls] = draw.counts[cls];
                break;
            }
            std::size_t pick = eligible[rng.uniform(eligible.size())];
            taken[pick] = true;
            draw.ids.push_back(pick);
            for (const auto& [c, n] : per_sentence[pick]) draw.counts[c] += n;
        }
    }
    return draw;
}

}  // namespace detail

/// Greedy K-shot support sampling over the whole pool. Deterministic in
/// (pool, k, seed).
inline SupportSet greedy_sample(const Corpus& pool, std::size_t k, std::uint64_t seed) {
    if (pool.empty()) throw Error("greedy_sample: empty pool");
    if (k == 0) throw Error("greedy_sample: k must be positive");
    for (const auto& s : pool)
        if (s.scheme != pool.front().scheme) throw Error("greedy_sample: pool mixes tagging schemes");

    std::vector<std::size_t> all(pool.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    Xorshift64Star rng(seed);
    auto draw = detail::greedy_draw(pool, all, k, rng);

    SupportSet out;
    out.k = k;
    out.seed = seed;
    out.source_ids = std::move(draw.ids);
    out.counts = std::move(draw.counts);
    out.class_order = std::move(draw.class_order);
    out.shortfalls = std::move(draw.shortfalls);
    out.sentences.reserve(out.source_ids.size());
    for (std::size_t id : out.source_ids) out.sentences.push_back(pool[id]);
    return out;
}

inline constexpr std::size_t kDefaultEpisodeTestSize = 30;

/// Support set plus a greedily drawn K-shot test set from the remaining
/// sentences, capped at `test_size` sentences. The test draw uses a seed
/// derived from `seed`.
inline Episode build_episode(const Corpus& pool, std::size_t k, std::size_t test_size, std::uint64_t seed) {
    if (test_size == 0) throw Error("build_episode: test_size must be positive");
    Episode ep;
    ep.support = greedy_sample(pool, k, seed);

    std::vector<bool> used(pool.size(), false);
    for (std::size_t id : ep.support.source_ids) used[id] = true;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (!used[i]) rest.push_back(i);
    if (rest.empty()) throw Error("build_episode: support consumed the whole pool, no test sentences remain");

    Xorshift64Star rng(splitmix64(seed ^ 0x7E57'5E7ULL));
    auto draw = detail::greedy_draw(pool, rest, k, rng, test_size);
    ep.test_ids = std::move(draw.ids);
    // Every remaining sentence may be entity-free; fall back to a uniform draw
    // so the episode still has something to evaluate.
    if (ep.test_ids.empty()) {
        std::size_t n = std::min(test_size, rest.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t j = i + rng.uniform(rest.size() - i);
            std::swap(rest[i], rest[j]);
            ep.test_ids.push_back(rest[i]);
        }
    }
    // A class of the whole pool that the remainder lacks entirely is a shortfall too.
    for (const auto& [c, n] : ep.support.counts)
        if (draw.counts.count(c) == 0) draw.shortfalls[c] = 0;
    ep.test_shortfalls = std::move(draw.shortfalls);
    for (std::size_t id : ep.test_ids) ep.test.push_back(pool[id]);
    return ep;
}

/// Line-oriented key=value manifest for releasing and reloading support sets.
inline std::string write_support_manifest(const SupportSet& s) {
    std::ostringstream os;
    os << "format=structshot-support-v1\n";
    os << "seed=" << s.seed << "\n";
    os << "k=" << s.k << "\n";
    os << "sentences=";
    for (std::size_t i = 0; i < s.source_ids.size(); ++i) os << (i ? " " : "") << s.source_ids[i];
    os << "\n";
    os << "class_order=";
    for (std::size_t i = 0; i < s.class_order.size(); ++i) os << (i ? " " : "") << s.class_order[i];
    os << "\n";
    for (const auto& [c, n] : s.counts) os << "count." << c << "=" << n << "\n";
    for (const auto& [c, n] : s.shortfalls) os << "shortfall." << c << "=" << n << "\n";
    return os.str();
}

namespace detail {

inline std::uint64_t parse_u64(const std::string& v, std::size_t line) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(line, "expected a non-negative integer, got '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ParseError(line, "integer out of range: '" + v + "'");
    }
}

}  // namespace detail

/// Rebuilds a support set from its manifest and the pool it was drawn from.
/// Recorded counts must match a recount over the referenced sentences.
inline SupportSet read_support_manifest(const std::string& text, const Corpus& pool) {
    SupportSet s;
    bool have_format = false, have_k = false, have_sentences = false;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> recorded;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "format") {
            if (val != "structshot-support-v1") throw ParseError(line_no, "unsupported manifest format '" + val + "'");
            have_format = true;
        } else if (key == "seed") {
            s.seed = detail::parse_u64(val, line_no);
        } else if (key == "k") {
            s.k = detail::parse_u64(val, line_no);
            have_k = true;
        } else if (key == "sentences") {
            std::istringstream ids(val);
            std::string tok;
            while (ids >> tok) {
                auto id = detail::parse_u64(tok, line_no);
                if (id >= pool.size())
                    throw ParseError(line_no, "sentence index " + tok + " outside pool of " +
                                                  std::to_string(pool.size()));
                s.source_ids.push_back(id);
            }
            have_sentences = true;
        } else if (key == "class_order") {
            std::istringstream cs(val);
            std::string c;
            while (cs >> c) s.class_order.push_back(c);
        } else if (key.rfind("count.", 0) == 0) {
            recorded[key.substr(6)] = detail::parse_u64(val, line_no);
        } else if (key.rfind("shortfall.", 0) == 0) {
            s.shortfalls[key.substr(10)] = detail::parse_u64(val, line_no);
        } else {
            throw ParseError(line_no, "unknown key '" + key + "'");
        }
    }
    if (!have_format || !have_k || !have_sentences)
        throw Error("support manifest is missing one of format/k/sentences");

    std::vector<bool> seen(pool.size(), false);
    for (std::size_t id : s.source_ids) {
        if (seen[id]) throw Error("support manifest repeats sentence " + std::to_string(id));
        seen[id] = true;
        s.sentences.push_back(pool[id]);
    }
    for (const auto& [c, n] : recorded) s.counts[c] = 0;
    for (const auto& sent : s.sentences)
        for (const auto& span : to_spans(sent)) ++s.counts[span.cls];
    for (const auto& [c, n] : s.counts) {
        auto it = recorded.find(c);
        std::size_t want = it == recorded.end() ? 0 : it->second;
        if (want != n)
            throw Error("support manifest count for " + c + " is " + std::to_string(want) + " but the pool gives " +
                        std::to_string(n));
    }
    return s;
}

}  // namespace structshot
