#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "structshot/structshot.hpp"

using namespace structshot;

namespace {

// Flags that mirror ExperimentConfig keys; a --config file is applied first
// and explicit flags override it.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;
};

std::string dashed(std::string key) {
    for (auto& c : key)
        if (c == '_') c = '-';
    return "--" + key;
}

constexpr const char* kConfigKeys[] = {
    "mode", "k", "n_support_sets", "n_episodes", "test_size", "tau", "use_transitions", "transition_mode",
    "scheme", "seeds", "target_classes", "source_train", "target_dev", "target_test", "dev_embeddings",
    "test_embeddings", "hash_dim", "hash_window", "threads"};

// Keys a subcommand does not use are ignored.
void add_config_flags(CLI::App* app, ConfigFlags& f) {
    app->add_option("--config", f.config_path, "key=value experiment config");
    for (const char* key : kConfigKeys)
        f.options.emplace_back(key, app->add_option(dashed(key), f.values[key], std::string("config key ") + key)
                                        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
                                        ->group("Config"));
}

ExperimentConfig resolve(const ConfigFlags& f) {
    return run_stage("config", [&] {
        ExperimentConfig cfg = f.config_path.empty() ? ExperimentConfig{} : parse_config(detail::read_file(f.config_path));
        for (const auto& [key, opt] : f.options)
            if (opt->count() > 0) set_config_value(cfg, key, f.values.at(key));
        return cfg;
    });
}

void require(const std::string& value, const char* key) {
    if (value.empty()) throw StageError("config", std::string(key) + " is required");
}

void report_warnings(const Warnings& w) {
    for (const auto& m : w.messages) std::cerr << "warning: " << m << "\n";
}

EmbeddingTable embeddings_for(const std::string& path, const Corpus& corpus, const ExperimentConfig& cfg,
                              Warnings* warnings) {
    if (!path.empty()) return load_embeddings(path, corpus, Normalization::L2, warnings);
    return hash_featurize(corpus, cfg.hash_dim, cfg.hash_window, warnings);
}

void write_text(const std::string& path, const std::string& text) {
    run_stage("write", [&] { detail::write_file(path, text); });
}

struct SampleArgs {
    ConfigFlags flags;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_sample_support(const SampleArgs& a, const CLI::Option* seed_opt) {
    auto cfg = resolve(a.flags);
    require(cfg.target_dev, "target_dev");
    Corpus pool = run_stage("load-dev", [&] { return load_target_split(cfg.target_dev, cfg); });
    const std::uint64_t seed = seed_opt->count() > 0 ? a.seed : cfg.effective_seeds().front();
    auto support = run_stage("sample-support", [&] { return greedy_sample(pool, cfg.k, seed); });
    write_text(a.out, write_support_manifest(support));
    std::cout << "sentences=" << support.sentences.size() << "\n";
    for (const auto& [cls, n] : support.counts) std::cout << "count." << cls << "=" << n << "\n";
    for (const auto& [cls, n] : support.shortfalls)
        std::cerr << "warning: class " << cls << " has only " << n << " span(s) available, k=" << cfg.k << "\n";
}

struct FeaturizeArgs {
    ConfigFlags flags;
    std::string corpus;
    std::string out;
};

void cmd_featurize(const FeaturizeArgs& a) {
    auto cfg = resolve(a.flags);
    const std::string text = run_stage("load-corpus", [&] { return detail::read_file(a.corpus); });
    Corpus corpus = run_stage("load-corpus", [&] { return parse_conll(text); });
    Warnings w;
    auto table = run_stage("featurize", [&] { return hash_featurize(corpus, cfg.hash_dim, cfg.hash_window, &w); });
    run_stage("write", [&] {
        write_embeddings(a.out, table);
        detail::write_file(manifest_path(a.out),
                           encode_embedding_manifest({table.provenance(), table.dim(), table.num_sentences(),
                                                      content_digest(text)}));
    });
    report_warnings(w);
}

struct EstimateArgs {
    ConfigFlags flags;
    std::vector<std::string> classes;
    std::string out;
};

void cmd_estimate_transitions(const EstimateArgs& a) {
    auto cfg = resolve(a.flags);
    require(cfg.source_train, "source_train");
    std::vector<std::string> classes = a.classes;
    if (classes.empty()) {
        require(cfg.target_dev, "target_dev (or --classes)");
        classes = run_stage("tag-set", [&] { return compute_tag_set(load_target_split(cfg.target_dev, cfg)).classes; });
    }
    Corpus source = run_stage("load-source", [&] { return load_source_split(cfg.source_train, cfg); });
    Warnings w;
    auto trans = run_stage("estimate-transitions", [&] {
        return expand(estimate_abstract(count_abstract(source), cfg.estimation), classes, &w);
    });
    write_text(a.out, write_transitions(trans));
    report_warnings(w);
}

struct PredictArgs {
    ConfigFlags flags;
    std::string support;
    std::string transitions;
    std::string out;
};

void cmd_predict(const PredictArgs& a) {
    auto cfg = resolve(a.flags);
    require(cfg.target_dev, "target_dev");
    require(cfg.target_test, "target_test");
    Corpus pool = run_stage("load-dev", [&] { return load_target_split(cfg.target_dev, cfg); });
    Corpus test = run_stage("load-test", [&] { return load_target_split(cfg.target_test, cfg); });
    auto support = run_stage("load-support", [&] { return read_support_manifest(detail::read_file(a.support), pool); });

    std::optional<ExpandedTransitions> trans;
    std::vector<std::string> classes;
    if (cfg.use_transitions) {
        if (a.transitions.empty()) throw StageError("config", "--transitions is required unless use_transitions=false");
        trans = run_stage("load-transitions", [&] { return read_transitions(detail::read_file(a.transitions)); });
        classes = trans->states.classes;
    } else {
        classes = compute_tag_set(pool).classes;
    }

    Warnings w;
    auto pool_table = run_stage("embed-dev", [&] { return embeddings_for(cfg.dev_embeddings, pool, cfg, &w); });
    auto test_table = run_stage("embed-test", [&] { return embeddings_for(cfg.test_embeddings, test, cfg, &w); });
    auto pred = run_stage("predict", [&] {
        return run_predict(support, pool_table, test, test_table, trans ? &*trans : nullptr,
                           DecodingConfig{cfg.tau, cfg.use_transitions}, classes, &w);
    });
    Corpus out;
    for (std::size_t i = 0; i < test.size(); ++i) out.push_back(TaggedSentence{test[i].tokens, pred[i], TagScheme::IO});
    write_text(a.out, render_conll(out));
    report_warnings(w);
}

struct EvaluateArgs {
    ConfigFlags flags;
    std::vector<std::string> preds;
    std::string name = "predictions";
    std::string report;
};

void cmd_evaluate(const EvaluateArgs& a) {
    auto cfg = resolve(a.flags);
    require(cfg.target_test, "target_test");
    Corpus gold = run_stage("load-test", [&] { return load_target_split(cfg.target_test, cfg); });
    std::vector<EvalReport> runs;
    for (const auto& path : a.preds) {
        runs.push_back(run_stage("evaluate", [&] {
            Corpus pred = parse_conll(detail::read_file(path));
            std::vector<std::vector<TagLabel>> tags;
            TagScheme scheme = TagScheme::IO;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (i < gold.size() && pred[i].tokens != gold[i].tokens)
                    throw Error(path + ": sentence " + std::to_string(i) + " tokens differ from the gold corpus");
                if (pred[i].scheme == TagScheme::BIO) scheme = TagScheme::BIO;
                tags.push_back(pred[i].tags);
            }
            return span_micro_f1(gold, tags, scheme);
        }));
    }
    auto agg = run_stage("aggregate", [&] { return aggregate(std::move(runs)); });
    std::cout << render_table({{a.name, agg}});
    if (!a.report.empty()) write_text(a.report, render_kv(agg));
}

struct RunArgs {
    ConfigFlags flags;
    std::string name;
    std::string report;
};

void cmd_run(const RunArgs& a) {
    auto cfg = resolve(a.flags);
    auto res = run_experiment(cfg);
    report_warnings(res.warnings);
    for (const auto& s : res.supports)
        for (const auto& [cls, n] : s.shortfalls)
            std::cerr << "warning: seed " << s.seed << ": class " << cls << " has only " << n << " span(s)\n";
    const std::string name = !a.name.empty() ? a.name : cfg.use_transitions ? "StructShot" : "NNShot";
    std::cout << render_table({{name, res.report}});
    if (!a.report.empty()) write_text(a.report, render_kv(res.report));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot NER by structured nearest neighbor"};
    app.require_subcommand(1);

    SampleArgs sample;
    auto* s = app.add_subcommand("sample-support", "Draw a k-shot support set from the target dev split");
    add_config_flags(s, sample.flags);
    auto* seed_opt = s->add_option("--seed", sample.seed, "sampling seed (default: first configured seed)");
    s->add_option("--out", sample.out, "support manifest to write")->required();

    FeaturizeArgs feat;
    auto* f = app.add_subcommand("featurize", "Write hashed token features as an FSEMB1 store");
    add_config_flags(f, feat.flags);
    f->add_option("--corpus", feat.corpus, "CoNLL corpus")->required();
    f->add_option("--out", feat.out, "embedding store to write; a .manifest is written alongside")->required();

    EstimateArgs est;
    auto* e = app.add_subcommand("estimate-transitions", "Estimate the abstract transition model on the source split");
    add_config_flags(e, est.flags);
    e->add_option("--classes", est.classes, "target classes in state order (default: dev tag set)")->delimiter(',');
    e->add_option("--out", est.out, "transition file to write")->required();

    PredictArgs pred;
    auto* p = app.add_subcommand("predict", "Tag the target test split from a support manifest");
    add_config_flags(p, pred.flags);
    p->add_option("--support", pred.support, "support manifest from sample-support")->required();
    p->add_option("--transitions", pred.transitions, "transition file from estimate-transitions");
    p->add_option("--out", pred.out, "predicted CoNLL file to write")->required();

    EvaluateArgs ev;
    auto* v = app.add_subcommand("evaluate", "Score predictions against the target test split");
    add_config_flags(v, ev.flags);
    v->add_option("--pred", ev.preds, "one predicted CoNLL file per run")->required();
    v->add_option("--name", ev.name, "condition name for the table");
    v->add_option("--report", ev.report, "key=value report to write");

    RunArgs run;
    auto* r = app.add_subcommand("run", "Run a full experiment from a config");
    add_config_flags(r, run.flags);
    r->add_option("--name", run.name, "condition name for the table");
    r->add_option("--report", run.report, "key=value report to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (*s) cmd_sample_support(sample, seed_opt);
        else if (*f) cmd_featurize(feat);
        else if (*e) cmd_estimate_transitions(est);
        else if (*p) cmd_predict(pred);
        else if (*v) cmd_evaluate(ev);
        else if (*r) cmd_run(run);
    } catch (const std::exception& ex) {
        std::cerr << "structshot: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
