#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "structshot/common.hpp"

namespace structshot {

enum class TagScheme { BIO, IO };

inline const char* to_string(TagScheme s) { return s == TagScheme::BIO ? "BIO" : "IO"; }

inline TagScheme parse_scheme(std::string_view s) {
    if (s == "IO" || s == "io") return TagScheme::IO;
    if (s == "BIO" || s == "bio") return TagScheme::BIO;
    throw Error("unknown tagging scheme '" + std::string(s) + "'");
}

/// One token tag: O, I-class or B-class.
struct TagLabel {
    enum class Kind { Outside, Inside, Begin };

    Kind kind = Kind::Outside;
    std::string cls;

    static TagLabel outside() { return {}; }
    static TagLabel inside(std::string c) { return {Kind::Inside, std::move(c)}; }
    static TagLabel begin(std::string c) { return {Kind::Begin, std::move(c)}; }

    bool is_outside() const noexcept { return kind == Kind::Outside; }
    bool is_entity() const noexcept { return kind != Kind::Outside; }

    std::string str() const {
        switch (kind) {
            case Kind::Outside: return "O";
            case Kind::Inside: return "I-" + cls;
            case Kind::Begin: return "B-" + cls;
        }
        return "O";
    }

    friend bool operator==(const TagLabel&, const TagLabel&) = default;
};

/// Parses "O", "I-X" or "B-X". Throws Error on anything else.
inline TagLabel parse_tag(std::string_view s) {
    if (s == "O") return TagLabel::outside();
    if (s.size() >= 2 && s[1] == '-' && (s[0] == 'I' || s[0] == 'B')) {
        std::string cls(s.substr(2));
        if (cls.empty()) throw Error("tag '" + std::string(s) + "' has an empty class");
        return s[0] == 'I' ? TagLabel::inside(std::move(cls)) : TagLabel::begin(std::move(cls));
    }
    throw Error("unrecognized tag '" + std::string(s) + "'");
}

struct TaggedSentence {
    std::vector<std::string> tokens;
    std::vector<TagLabel> tags;
    TagScheme scheme = TagScheme::IO;

    std::size_t size() const noexcept { return tokens.size(); }

    friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

using Corpus = std::vector<TaggedSentence>;

/// Throws Error if the sentence violates its scheme.
inline void validate(const TaggedSentence& s) {
    if (s.tokens.empty()) throw Error("sentence has no tokens");
    if (s.tokens.size() != s.tags.size())
        throw Error("sentence has " + std::to_string(s.tokens.size()) + " tokens but " +
                    std::to_string(s.tags.size()) + " tags");
    for (std::size_t t = 0; t < s.tags.size(); ++t) {
        const TagLabel& tag = s.tags[t];
        if (tag.is_entity() && tag.cls.empty())
            throw Error("empty entity class at token " + std::to_string(t));
        if (s.scheme == TagScheme::IO && tag.kind == TagLabel::Kind::Begin)
            throw Error("B- tag at token " + std::to_string(t) + " under IO scheme");
        if (s.scheme == TagScheme::BIO && tag.kind == TagLabel::Kind::Inside) {
            bool opened = t > 0 && s.tags[t - 1].is_entity() && s.tags[t - 1].cls == tag.cls;
            if (!opened)
                throw Error("I-" + tag.cls + " at token " + std::to_string(t) +
                            " has no opening B-/I- tag");
        }
    }
}

struct ParseStats {
    /// BIO I-X tags without a valid opener that were promoted to B-X.
    std::size_t repaired_tags = 0;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) cols.push_back(line.substr(i, j - i));
        i = j;
    }
    return cols;
}

}  // namespace detail

/// Reads whitespace-column text: first column is the token, last column the
/// tag, blank lines separate sentences. The scheme is BIO if any B- tag
/// appears anywhere in the text, IO otherwise. Under BIO an I-X without an
/// opener is promoted to B-X and counted in `stats`.
inline Corpus parse_conll(std::string_view text, ParseStats* stats = nullptr) {
    struct Raw {
        std::vector<std::string> tokens;
        std::vector<TagLabel> tags;
    };
    std::vector<Raw> raw;
    Raw cur;
    bool any_begin = false;

    auto flush = [&] {
        if (!cur.tokens.empty()) raw.push_back(std::move(cur));
        cur = Raw{};
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;

        auto cols = detail::split_ws(line);
        if (cols.empty()) {
            flush();
            continue;
        }
        if (cols.front() == "-DOCSTART-") {
            flush();
            continue;
        }
        if (cols.size() < 2)
            throw ParseError(line_no, "expected at least 2 columns, got " + std::to_string(cols.size()));
        TagLabel tag;
        try {
            tag = parse_tag(cols.back());
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
        if (tag.kind == TagLabel::Kind::Begin) any_begin = true;
        cur.tokens.emplace_back(cols.front());
        cur.tags.push_back(std::move(tag));
    }
    flush();

    const TagScheme scheme = any_begin ? TagScheme::BIO : TagScheme::IO;
    Corpus out;
    out.reserve(raw.size());
    for (auto& r : raw) {
        if (scheme == TagScheme::BIO) {
            for (std::size_t t = 0; t < r.tags.size(); ++t) {
                TagLabel& tag = r.tags[t];
                if (tag.kind != TagLabel::Kind::Inside) continue;
                bool opened = t > 0 && r.tags[t - 1].is_entity() && r.tags[t - 1].cls == tag.cls;
                if (!opened) {
                    tag.kind = TagLabel::Kind::Begin;
                    if (stats != nullptr) ++stats->repaired_tags;
                }
            }
        }
        out.push_back(TaggedSentence{std::move(r.tokens), std::move(r.tags), scheme});
    }
    return out;
}

/// Inverse of parse_conll: "token\ttag" lines, one blank line after each sentence.
inline std::string render_conll(const Corpus& corpus) {
    std::string out;
    for (const auto& s : corpus) {
        for (std::size_t t = 0; t < s.size(); ++t) {
            out += s.tokens[t];
            out += '\t';
            out += s.tags[t].str();
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

inline TaggedSentence to_io(TaggedSentence s) {
    for (auto& tag : s.tags)
        if (tag.kind == TagLabel::Kind::Begin) tag.kind = TagLabel::Kind::Inside;
    s.scheme = TagScheme::IO;
    return s;
}

inline Corpus to_io(Corpus corpus) {
    for (auto& s : corpus) s = to_io(std::move(s));
    return corpus;
}

struct EntitySpan {
    std::string cls;
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
    friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

/// Spans of a tag sequence. IO: maximal runs of one class. BIO: B-X opens a
/// span that following I-X tags extend. A stray I-X under BIO opens a span
/// (conlleval convention).
inline std::vector<EntitySpan> to_spans(const std::vector<TagLabel>& tags, TagScheme scheme) {
    std::vector<EntitySpan> spans;
    bool open = false;
    for (std::size_t t = 0; t < tags.size(); ++t) {
        const TagLabel& tag = tags[t];
        if (tag.is_outside()) {
            open = false;
            continue;
        }
        bool extends = open && spans.back().cls == tag.cls &&
                       (scheme == TagScheme::IO || tag.kind == TagLabel::Kind::Inside);
        if (extends) {
            spans.back().end = t;
        } else {
            spans.push_back(EntitySpan{tag.cls, t, t});
            open = true;
        }
    }
    return spans;
}

inline std::vector<EntitySpan> to_spans(const TaggedSentence& s) { return to_spans(s.tags, s.scheme); }

struct TagSet {
    /// Ascending frequency, ties lexicographic.
    std::vector<std::string> classes;
    std::map<std::string, std::size_t> frequencies;

    bool contains(const std::string& c) const { return frequencies.count(c) != 0; }
};

/// Orders classes ascending by count, ties broken lexicographically.
inline std::vector<std::string> order_by_frequency(const std::map<std::string, std::size_t>& freq) {
    std::vector<std::string> classes;
    classes.reserve(freq.size());
    for (const auto& [c, n] : freq) classes.push_back(c);
    std::stable_sort(classes.begin(), classes.end(), [&](const std::string& a, const std::string& b) {
        return freq.at(a) < freq.at(b);
    });
    return classes;
}

/// Entity-span counts per class over the corpus.
inline TagSet compute_tag_set(const Corpus& corpus) {
    TagSet ts;
    for (const auto& s : corpus)
        for (const auto& span : to_spans(s)) ++ts.frequencies[span.cls];
    ts.classes = order_by_frequency(ts.frequencies);
    return ts;
}

enum class RemapMode { Train, Test };

/// Tag-set extension remapping. Train erases target classes; Test keeps only
/// them. Erased tags become O; a surviving I-X whose B-X opener was erased
/// cannot occur since erasure is per class.
inline Corpus remap_for_extension(Corpus corpus, const std::set<std::string>& target_classes, RemapMode mode) {
    if (target_classes.empty()) throw Error("remap_for_extension: target class set is empty");
    for (auto& s : corpus) {
        for (auto& tag : s.tags) {
            if (!tag.is_entity()) continue;
            bool in_target = target_classes.count(tag.cls) != 0;
            bool erase = mode == RemapMode::Train ? in_target : !in_target;
            if (erase) tag = TagLabel::outside();
        }
    }
    return corpus;
}

}  // namespace structshot
