#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/rng.hpp"

namespace structshot {

/// Per-sentence, per-token vectors of a fixed dimension. Each sentence is one
/// contiguous token-major block of `tokens * dim` values.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim, std::string provenance = {})
        : dim_(dim), provenance_(std::move(provenance)) {
        if (dim == 0) throw Error("embedding dimension must be positive");
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_sentences() const noexcept { return data_.size(); }
    std::size_t num_tokens(std::size_t sentence) const { return data_.at(sentence).size() / dim_; }
    const std::string& provenance() const noexcept { return provenance_; }
    void set_provenance(std::string p) { provenance_ = std::move(p); }

    std::span<const double> vec(std::size_t sentence, std::size_t token) const {
        const auto& block = data_.at(sentence);
        if ((token + 1) * dim_ > block.size()) throw Error("token index out of range in embedding table");
        return {block.data() + token * dim_, dim_};
    }

    /// Appends a sentence block; values.size() must be a multiple of dim.
    void add_sentence(std::vector<double> values) {
        if (values.size() % dim_ != 0) throw Error("sentence block is not a multiple of the embedding dimension");
        for (double v : values)
            if (!std::isfinite(v)) throw Error("non-finite embedding component");
        data_.push_back(std::move(values));
    }

    const std::vector<double>& block(std::size_t sentence) const { return data_.at(sentence); }

    /// Checks that the table covers `corpus` sentence for sentence.
    void check_aligned(const Corpus& corpus) const {
        if (data_.size() != corpus.size())
            throw Error("embedding table has " + std::to_string(data_.size()) + " sentences, corpus has " +
                        std::to_string(corpus.size()));
        for (std::size_t i = 0; i < corpus.size(); ++i)
            if (num_tokens(i) != corpus[i].size())
                throw Error("embedding/corpus misalignment at sentence " + std::to_string(i) + ": " +
                            std::to_string(num_tokens(i)) + " vectors for " + std::to_string(corpus[i].size()) +
                            " tokens");
    }

    /// Compares dimension and values; provenance is metadata and is ignored.
    friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
        return a.dim_ == b.dim_ && a.data_ == b.data_;
    }

private:
    std::size_t dim_ = 0;
    std::string provenance_;
    std::vector<std::vector<double>> data_;
};

/// Unit-norm copy of `v`. The zero vector stays zero and is reported.
inline std::vector<double> l2_normalize(std::span<const double> v, Warnings* warnings = nullptr) {
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw Error("l2_normalize: non-finite component");
        sq += x * x;
    }
    std::vector<double> out(v.begin(), v.end());
    if (sq == 0.0) {
        warn(warnings, "l2_normalize: zero feature vector left unnormalized");
        return out;
    }
    const double norm = std::sqrt(sq);
    for (double& x : out) x /= norm;
    return out;
}

/// Copy of `table` with every token vector L2-normalized.
inline EmbeddingTable normalized(const EmbeddingTable& table, Warnings* warnings = nullptr) {
    EmbeddingTable out(table.dim(), table.provenance());
    const std::size_t d = table.dim();
    for (std::size_t s = 0; s < table.num_sentences(); ++s) {
        const auto& in = table.block(s);
        std::vector<double> block(in.size());
        for (std::size_t off = 0; off < in.size(); off += d) {
            auto v = l2_normalize(std::span<const double>(in.data() + off, d), warnings);
            std::copy(v.begin(), v.end(), block.begin() + static_cast<std::ptrdiff_t>(off));
        }
        out.add_sentence(std::move(block));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hash featurizer

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace detail {

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

/// Adds `weight` at bucket splitmix64(fnv1a64(feature)) % dim with the sign
/// taken from the top bit of the same hash.
inline void hash_feature(std::vector<double>& v, std::string_view feature, double weight) {
    const std::uint64_t h = splitmix64(fnv1a64(feature));
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[h % v.size()] += sign * weight;
}

}  // namespace detail

inline constexpr std::size_t kMinHashDim = 8;

/// Deterministic stand-in for a trained token embedder. Per token, signed
/// feature hashing of
///   "w:" + lowercase token                        weight 1
///   "c:" + each char 3-gram of "^" + lower + "$"   weight 1/sqrt(#3-grams)
///   "n<off>:" + lowercase neighbor, 1<=|off|<=window, in range only,
///                                                 weight 1/(1+|off|)
/// followed by L2 normalization. Lowercasing is ASCII-only.
inline EmbeddingTable hash_featurize(const Corpus& corpus, std::size_t dim, std::size_t window,
                                     Warnings* warnings = nullptr) {
    if (dim < kMinHashDim) throw Error("hash_featurize: dim must be at least 8");
    EmbeddingTable table(dim, "hash-featurizer dim=" + std::to_string(dim) + " window=" + std::to_string(window));
    for (const auto& s : corpus) {
        std::vector<std::string> lower;
        lower.reserve(s.size());
        for (const auto& tok : s.tokens) lower.push_back(detail::ascii_lower(tok));

        std::vector<double> block;
        block.reserve(s.size() * dim);
        for (std::size_t t = 0; t < s.size(); ++t) {
            std::vector<double> v(dim, 0.0);
            detail::hash_feature(v, "w:" + lower[t], 1.0);

            const std::string padded = "^" + lower[t] + "$";
            std::vector<std::string_view> grams;
            if (padded.size() <= 3) {
                grams.emplace_back(padded);
            } else {
                for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(std::string_view(padded).substr(i, 3));
            }
            const double gram_w = 1.0 / std::sqrt(static_cast<double>(grams.size()));
            for (auto g : grams) detail::hash_feature(v, "c:" + std::string(g), gram_w);

            for (std::size_t off = 1; off <= window; ++off) {
                const double w = 1.0 / (1.0 + static_cast<double>(off));
                if (t >= off) detail::hash_feature(v, "n-" + std::to_string(off) + ":" + lower[t - off], w);
                if (t + off < s.size()) detail::hash_feature(v, "n+" + std::to_string(off) + ":" + lower[t + off], w);
            }
            auto unit = l2_normalize(v, warnings);
            block.insert(block.end(), unit.begin(), unit.end());
        }
        table.add_sentence(std::move(block));
    }
    return table;
}

// ---------------------------------------------------------------------------
// FSEMB1 store: little-endian; magic "FSEMB1"; u32 dim; u32 sentence count;
// per sentence u32 token count then token_count * dim float32 values.

inline constexpr std::string_view kEmbeddingMagic = "FSEMB1";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw Error("embedding file truncated at byte " + std::to_string(pos));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

}  // namespace detail

/// Serializes to FSEMB1 bytes. Values are narrowed to float32.
inline std::string encode_embeddings(const EmbeddingTable& table) {
    std::string out(kEmbeddingMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(table.dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(table.num_sentences()));
    for (std::size_t s = 0; s < table.num_sentences(); ++s) {
        detail::put_u32(out, static_cast<std::uint32_t>(table.num_tokens(s)));
        for (double v : table.block(s)) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

/// Parses FSEMB1 bytes without any corpus check or normalization.
inline EmbeddingTable decode_embeddings(std::string_view bytes) {
    if (bytes.size() < kEmbeddingMagic.size() || bytes.substr(0, kEmbeddingMagic.size()) != kEmbeddingMagic)
        throw Error(bytes.empty() ? "embedding file is empty" : "embedding file lacks the FSEMB1 magic");
    std::size_t pos = kEmbeddingMagic.size();
    const std::uint32_t dim = detail::get_u32(bytes, pos);
    if (dim == 0) throw Error("embedding file declares dim 0");
    const std::uint32_t n = detail::get_u32(bytes, pos);
    EmbeddingTable table(dim);
    for (std::uint32_t s = 0; s < n; ++s) {
        const std::uint32_t tokens = detail::get_u32(bytes, pos);
        const std::size_t values = static_cast<std::size_t>(tokens) * dim;
        if (pos + values * 4 > bytes.size())
            throw Error("embedding file truncated in sentence " + std::to_string(s));
        std::vector<double> block(values);
        for (std::size_t i = 0; i < values; ++i) {
            float f = std::bit_cast<float>(detail::get_u32(bytes, pos));
            if (!std::isfinite(f))
                throw Error("non-finite value in sentence " + std::to_string(s) + " of embedding file");
            block[i] = f;
        }
        table.add_sentence(std::move(block));
    }
    if (pos != bytes.size())
        throw Error("embedding file has " + std::to_string(bytes.size() - pos) +
                    " trailing bytes; records do not match the declared dim " + std::to_string(dim));
    return table;
}

inline void write_embeddings(const std::string& path, const EmbeddingTable& table) {
    detail::write_file(path, encode_embeddings(table));
}

enum class Normalization { None, L2 };

/// Reads an FSEMB1 file and aligns it to `corpus`. With Normalization::L2
/// (the default) every vector is normalized once here.
inline EmbeddingTable load_embeddings(const std::string& path, const Corpus& corpus,
                                      Normalization norm = Normalization::L2, Warnings* warnings = nullptr) {
    EmbeddingTable table = decode_embeddings(detail::read_file(path));
    table.check_aligned(corpus);
    return norm == Normalization::L2 ? normalized(table, warnings) : table;
}

// ---------------------------------------------------------------------------
// Sidecar manifest ("<store>.manifest"), key=value lines.

struct EmbeddingManifest {
    std::string provenance;
    std::size_t dim = 0;
    std::size_t sentences = 0;
    std::string corpus_digest;

    friend bool operator==(const EmbeddingManifest&, const EmbeddingManifest&) = default;
};

/// "fnv1a64:<16 hex digits>" of raw file content.
inline std::string content_digest(std::string_view bytes) {
    std::ostringstream os;
    os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
    return os.str();
}

inline std::string manifest_path(const std::string& store_path) { return store_path + ".manifest"; }

inline std::string encode_embedding_manifest(const EmbeddingManifest& m) {
    std::ostringstream os;
    os << "format=FSEMB1\n"
       << "provenance=" << m.provenance << "\n"
       << "dim=" << m.dim << "\n"
       << "sentences=" << m.sentences << "\n"
       << "corpus_digest=" << m.corpus_digest << "\n";
    return os.str();
}

/// Unknown keys are kept out of the struct but tolerated, so producers may
/// add fields (checkpoint id, pooling, layer).
inline EmbeddingManifest decode_embedding_manifest(const std::string& text) {
    EmbeddingManifest m;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value in embedding manifest");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "format" && val != "FSEMB1") throw ParseError(line_no, "unsupported store format '" + val + "'");
            if (key == "provenance") m.provenance = val;
            else if (key == "dim") m.dim = std::stoull(val);
            else if (key == "sentences") m.sentences = std::stoull(val);
            else if (key == "corpus_digest") m.corpus_digest = val;
        } catch (const std::invalid_argument&) {
            throw ParseError(line_no, "bad integer for " + key);
        }
    }
    return m;
}

}  // namespace structshot
