#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/decode.hpp"
#include "structshot/embed.hpp"
#include "structshot/knn.hpp"
#include "structshot/metrics.hpp"
#include "structshot/sampler.hpp"
#include "structshot/transitions.hpp"

namespace structshot {

/// Error annotated with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

enum class ExperimentMode { TagsetExtension, DomainTransfer, Episodes };

inline ExperimentMode parse_experiment_mode(const std::string& s) {
    if (s == "tagset-extension") return ExperimentMode::TagsetExtension;
    if (s == "domain-transfer") return ExperimentMode::DomainTransfer;
    if (s == "episodes") return ExperimentMode::Episodes;
    throw Error("unknown mode '" + s + "' (expected tagset-extension, domain-transfer or episodes)");
}

inline const char* to_string(ExperimentMode m) {
    switch (m) {
        case ExperimentMode::TagsetExtension: return "tagset-extension";
        case ExperimentMode::DomainTransfer: return "domain-transfer";
        case ExperimentMode::Episodes: return "episodes";
    }
    return "?";
}

/// The three OntoNotes target groups used for tag-set extension.
inline std::optional<std::set<std::string>> target_group_preset(const std::string& name) {
    if (name == "A" || name == "groupA") return std::set<std::string>{"ORG", "NORP", "ORDINAL", "WORK_OF_ART", "QUANTITY", "LAW"};
    if (name == "B" || name == "groupB") return std::set<std::string>{"GPE", "CARDINAL", "PERCENT", "TIME", "EVENT", "LANGUAGE"};
    if (name == "C" || name == "groupC") return std::set<std::string>{"PERSON", "DATE", "MONEY", "LOC", "FAC", "PRODUCT"};
    return std::nullopt;
}

struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::DomainTransfer;
    std::size_t k = 1;
    std::size_t n_support_sets = 5;
    std::size_t n_episodes = 100;
    std::size_t test_size = kDefaultEpisodeTestSize;
    double tau = 0.01;
    bool use_transitions = true;
    EstimationMode estimation = EstimationMode::RowNormalized;
    TagScheme scheme = TagScheme::IO;
    std::vector<std::uint64_t> seeds;
    std::set<std::string> target_classes;

    std::string source_train;
    std::string target_dev;
    std::string target_test;
    /// Optional FSEMB1 stores; the hash featurizer is used when empty.
    std::string dev_embeddings;
    std::string test_embeddings;
    std::size_t hash_dim = 256;
    std::size_t hash_window = 1;
    /// 0 means one worker per hardware thread.
    std::size_t threads = 0;

    /// Seeds actually used: the configured list, or 0..n-1.
    std::vector<std::uint64_t> effective_seeds() const {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> out(n_support_sets);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
        return out;
    }

    void validate() const {
        if (k == 0) throw Error("config: k must be positive");
        if (n_support_sets == 0) throw Error("config: n_support_sets must be positive");
        if (n_episodes == 0) throw Error("config: n_episodes must be positive");
        if (test_size == 0) throw Error("config: test_size must be positive");
        if (!(tau > 0.0)) throw Error("config: tau must be positive");
        if (mode != ExperimentMode::Episodes && !seeds.empty() && seeds.size() != n_support_sets)
            throw Error("config: " + std::to_string(seeds.size()) + " seeds given for n_support_sets=" +
                        std::to_string(n_support_sets));
        if (mode == ExperimentMode::TagsetExtension && target_classes.empty())
            throw Error("config: target_classes is required in tagset-extension mode");
        if (mode != ExperimentMode::Episodes && target_dev.empty()) throw Error("config: target_dev is required");
        if (target_test.empty()) throw Error("config: target_test is required");
        if (use_transitions && source_train.empty()) throw Error("config: source_train is required for transitions");
        if (hash_dim < kMinHashDim) throw Error("config: hash_dim must be at least 8");
    }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error("expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw Error("expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw Error("expected a number, got '" + v + "'");
    return d;
}

inline std::size_t parse_count(const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw Error("expected a non-negative integer, got '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw Error("integer out of range: '" + v + "'");
    }
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys are errors.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "mode") c.mode = parse_experiment_mode(value);
    else if (key == "k") c.k = detail::parse_count(value);
    else if (key == "n_support_sets") c.n_support_sets = detail::parse_count(value);
    else if (key == "n_episodes") c.n_episodes = detail::parse_count(value);
    else if (key == "test_size") c.test_size = detail::parse_count(value);
    else if (key == "tau") c.tau = detail::parse_double(value);
    else if (key == "use_transitions") c.use_transitions = detail::parse_bool(value);
    else if (key == "transition_mode") c.estimation = parse_estimation_mode(value);
    else if (key == "scheme") c.scheme = parse_scheme(value);
    else if (key == "seeds") {
        c.seeds.clear();
        for (const auto& s : detail::split_list(value)) c.seeds.push_back(detail::parse_count(s));
    } else if (key == "target_classes") {
        c.target_classes.clear();
        for (const auto& s : detail::split_list(value)) {
            if (auto preset = target_group_preset(s)) c.target_classes.insert(preset->begin(), preset->end());
            else c.target_classes.insert(s);
        }
    } else if (key == "source_train") c.source_train = value;
    else if (key == "target_dev") c.target_dev = value;
    else if (key == "target_test") c.target_test = value;
    else if (key == "dev_embeddings") c.dev_embeddings = value;
    else if (key == "test_embeddings") c.test_embeddings = value;
    else if (key == "hash_dim") c.hash_dim = detail::parse_count(value);
    else if (key == "hash_window") c.hash_window = detail::parse_count(value);
    else if (key == "threads") c.threads = detail::parse_count(value);
    else throw Error("unknown config key '" + key + "'");
}

/// Line-oriented key=value config; '#' starts a comment line.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
        try {
            set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return c;
}

inline Corpus read_corpus(const std::string& path, ParseStats* stats = nullptr) {
    return parse_conll(detail::read_file(path), stats);
}

/// Predicts every sentence of `test`, whose vectors are rows `test_rows` of
/// `test_table`. With use_transitions the tempered `trans` drives Viterbi;
/// otherwise tokens are tagged independently. Outputs are IO tags.
inline std::vector<std::vector<TagLabel>> run_predict(const SupportIndex& index, const Corpus& test,
                                                      std::span<const std::size_t> test_rows,
                                                      const EmbeddingTable& test_table,
                                                      const ExpandedTransitions* trans, const DecodingConfig& cfg,
                                                      Warnings* warnings = nullptr) {
    if (test_rows.size() != test.size()) throw Error("run_predict: rows and test sentences differ in length");
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test_rows[i] >= test_table.num_sentences() || test_table.num_tokens(test_rows[i]) != test[i].size())
            missing.push_back(i);
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + std::to_string(missing[i]);
        if (missing.size() > 20) list += ", ...";
        throw Error("run_predict: missing or misaligned embeddings for " + std::to_string(missing.size()) +
                    " test sentence(s): " + list);
    }

    std::optional<ExpandedTransitions> tempered;
    if (cfg.use_transitions) {
        if (trans == nullptr) throw Error("run_predict: transitions requested but none supplied");
        if (trans->states != index.states())
            throw Error("run_predict: transition classes do not match the support index classes");
        tempered = apply_temperature(*trans, cfg.tau);
    }

    std::vector<std::vector<TagLabel>> out;
    out.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto vecs = token_vectors(test_table, test_rows[i]);
        if (cfg.use_transitions) out.push_back(viterbi(sentence_emissions(vecs, index), *tempered, warnings));
        else out.push_back(nnshot_predict(vecs, index));
    }
    return out;
}

/// Convenience overload: support drawn from a pool whose vectors are in
/// `support_table`, test sentences aligned 1:1 with `test_table`.
inline std::vector<std::vector<TagLabel>> run_predict(const SupportSet& support, const EmbeddingTable& support_table,
                                                      const Corpus& test, const EmbeddingTable& test_table,
                                                      const ExpandedTransitions* trans, const DecodingConfig& cfg,
                                                      std::vector<std::string> classes = {},
                                                      Warnings* warnings = nullptr) {
    if (classes.empty() && trans != nullptr) classes = trans->states.classes;
    auto index = SupportIndex::build(support, support_table, std::move(classes));
    std::vector<std::size_t> rows(test.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return run_predict(index, test, rows, test_table, trans, cfg, warnings);
}

/// Runs `jobs` on up to `threads` workers; results keep job order.
template <typename R>
std::vector<R> run_parallel(std::size_t n, std::size_t threads, const std::function<R(std::size_t)>& job) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(n, 1));
    std::vector<R> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i] = job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

/// Everything one experiment run produced, for reporting and release.
struct ExperimentResult {
    AggregateReport report;
    std::vector<SupportSet> supports;
    std::optional<ExpandedTransitions> transitions;
    std::vector<std::string> classes;
    Warnings warnings;
};

namespace detail {

inline EmbeddingTable embeddings_for(const std::string& path, const Corpus& corpus, const ExperimentConfig& cfg,
                                     Warnings* warnings) {
    if (!path.empty()) return load_embeddings(path, corpus, Normalization::L2, warnings);
    return hash_featurize(corpus, cfg.hash_dim, cfg.hash_window, warnings);
}

inline Corpus prepare(Corpus c, const ExperimentConfig& cfg) {
    return cfg.scheme == TagScheme::IO ? to_io(std::move(c)) : c;
}

inline std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace detail

/// Target split as every stage sees it: scheme applied and, in tag-set
/// extension mode, non-target classes relabeled O.
inline Corpus load_target_split(const std::string& path, const ExperimentConfig& cfg) {
    Corpus c = detail::prepare(read_corpus(path), cfg);
    if (cfg.mode == ExperimentMode::TagsetExtension)
        c = remap_for_extension(std::move(c), cfg.target_classes, RemapMode::Test);
    return c;
}

/// Source training split in IO form; target classes become O in tag-set
/// extension mode.
inline Corpus load_source_split(const std::string& path, const ExperimentConfig& cfg) {
    Corpus c = to_io(read_corpus(path));
    if (cfg.mode == ExperimentMode::TagsetExtension)
        c = remap_for_extension(std::move(c), cfg.target_classes, RemapMode::Train);
    return c;
}

/// Full experiment. Transitions come only from the source training split,
/// supports only from the target development split (episodes: from the
/// target test pool), and the standard test set is never sampled or
/// filtered outside episode mode (tag-set extension only relabels it).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    run_stage("config", [&] { cfg.validate(); });
    ExperimentResult res;
    Warnings& warnings = res.warnings;

    Corpus source;
    if (cfg.use_transitions) source = run_stage("load-source", [&] { return load_source_split(cfg.source_train, cfg); });
    Corpus dev, test;
    if (cfg.mode != ExperimentMode::Episodes)
        dev = run_stage("load-dev", [&] { return load_target_split(cfg.target_dev, cfg); });
    test = run_stage("load-test", [&] { return load_target_split(cfg.target_test, cfg); });

    const Corpus& pool = cfg.mode == ExperimentMode::Episodes ? test : dev;
    res.classes = run_stage("tag-set", [&] {
        auto ts = compute_tag_set(pool);
        if (ts.classes.empty()) throw Error("support pool contains no entities");
        return ts.classes;
    });

    if (cfg.use_transitions) {
        res.transitions = run_stage("estimate-transitions", [&] {
            return expand(estimate_abstract(count_abstract(source), cfg.estimation), res.classes, &warnings);
        });
    }
    const ExpandedTransitions* trans = res.transitions ? &*res.transitions : nullptr;
    const DecodingConfig dcfg{cfg.tau, cfg.use_transitions};

    EmbeddingTable test_table = run_stage("embed-test", [&] {
        return detail::embeddings_for(cfg.test_embeddings, test, cfg, &warnings);
    });

    std::vector<EvalReport> reports;
    if (cfg.mode == ExperimentMode::Episodes) {
        const std::uint64_t base = cfg.seeds.empty() ? 0 : cfg.seeds.front();
        struct Run {
            EvalReport report;
            SupportSet support;
        };
        auto runs = run_stage("episodes", [&] {
            return run_parallel<Run>(cfg.n_episodes, cfg.threads, [&](std::size_t i) {
                Episode ep = build_episode(pool, cfg.k, cfg.test_size, splitmix64(base + i));
                auto index = SupportIndex::build(ep.support, test_table, res.classes);
                auto pred = run_predict(index, ep.test, ep.test_ids, test_table, trans, dcfg);
                return Run{span_micro_f1(ep.test, pred), std::move(ep.support)};
            });
        });
        for (auto& r : runs) {
            reports.push_back(std::move(r.report));
            res.supports.push_back(std::move(r.support));
        }
    } else {
        EmbeddingTable dev_table = run_stage("embed-dev", [&] {
            return detail::embeddings_for(cfg.dev_embeddings, dev, cfg, &warnings);
        });
        const auto seeds = cfg.effective_seeds();
        res.supports = run_stage("sample-support", [&] {
            return run_parallel<SupportSet>(seeds.size(), cfg.threads,
                                            [&](std::size_t i) { return greedy_sample(dev, cfg.k, seeds[i]); });
        });
        const auto rows = detail::iota(test.size());
        reports = run_stage("predict", [&] {
            return run_parallel<EvalReport>(res.supports.size(), cfg.threads, [&](std::size_t i) {
                auto index = SupportIndex::build(res.supports[i], dev_table, res.classes);
                return span_micro_f1(test, run_predict(index, test, rows, test_table, trans, dcfg));
            });
        });
    }
    res.report = run_stage("aggregate", [&] { return aggregate(std::move(reports)); });
    return res;
}

}  // namespace structshot
