#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "structshot/pipeline.hpp"
#include "test_util.hpp"

namespace structshot {
namespace {

namespace fs = std::filesystem;

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "structshot_pipeline_test";
    fs::create_directories(dir);
    return dir;
}

std::string write_corpus(const std::string& name, const Corpus& c) {
    auto p = (work_dir() / name).string();
    std::ofstream(p) << render_conll(c);
    return p;
}

// Source, dev and test splits drawn from one separable distribution.
struct Splits {
    std::string source, dev, test;
};

Splits separable_splits(std::uint64_t seed) {
    Xorshift64Star rng(seed);
    Corpus all = testing::separable_corpus(rng, 180, 3);
    Corpus source(all.begin(), all.begin() + 60), dev(all.begin() + 60, all.begin() + 120),
        test(all.begin() + 120, all.end());
    const std::string tag = std::to_string(seed);
    return {write_corpus("source" + tag + ".conll", source), write_corpus("dev" + tag + ".conll", dev),
            write_corpus("test" + tag + ".conll", test)};
}

ExperimentConfig base_config(const Splits& s) {
    ExperimentConfig c;
    c.source_train = s.source;
    c.target_dev = s.dev;
    c.target_test = s.test;
    c.n_support_sets = 3;
    c.k = 5;
    c.threads = 1;
    return c;
}

TEST(Config, ParsesKeysAndComments) {
    auto c = parse_config(
        "# experiment\n"
        "mode = tagset-extension\n"
        "k=5\n"
        "tau=0.05\n"
        "use_transitions=false\n"
        "transition_mode=literal\n"
        "scheme=BIO\n"
        "seeds=3, 4,5\n"
        "target_classes=A\n"
        "n_support_sets=3\n"
        "\n"
        "source_train=/data/src.conll\n");
    EXPECT_EQ(c.mode, ExperimentMode::TagsetExtension);
    EXPECT_EQ(c.k, 5u);
    EXPECT_DOUBLE_EQ(c.tau, 0.05);
    EXPECT_FALSE(c.use_transitions);
    EXPECT_EQ(c.estimation, EstimationMode::IncomingNormalized);
    EXPECT_EQ(c.scheme, TagScheme::BIO);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4, 5}));
    EXPECT_EQ(c.target_classes, *target_group_preset("A"));
    EXPECT_EQ(c.source_train, "/data/src.conll");
    EXPECT_EQ(c.effective_seeds(), c.seeds);
}

TEST(Config, Defaults) {
    ExperimentConfig c;
    EXPECT_EQ(c.k, 1u);
    EXPECT_EQ(c.n_support_sets, 5u);
    EXPECT_EQ(c.test_size, 30u);
    EXPECT_DOUBLE_EQ(c.tau, 0.01);
    EXPECT_EQ(c.effective_seeds(), (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
}

TEST(Config, ErrorsCarryLineNumbers) {
    try {
        parse_config("k=1\nbogus=2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(parse_config("k=-1\n"), ParseError);
    EXPECT_THROW(parse_config("tau=abc\n"), ParseError);
    EXPECT_THROW(parse_config("no equals sign\n"), ParseError);
    EXPECT_THROW(parse_config("mode=unknown\n"), ParseError);
}

TEST(Config, PresetsAreDisjointAndMixable) {
    auto a = *target_group_preset("A"), b = *target_group_preset("B"), c = *target_group_preset("C");
    EXPECT_EQ(a.size() + b.size() + c.size(), 18u);
    std::set<std::string> all(a.begin(), a.end());
    all.insert(b.begin(), b.end());
    all.insert(c.begin(), c.end());
    EXPECT_EQ(all.size(), 18u);
    EXPECT_FALSE(target_group_preset("D"));
    auto cfg = parse_config("target_classes=A,EXTRA\n");
    EXPECT_EQ(cfg.target_classes.size(), 7u);
}

TEST(Config, Validation) {
    Splits s{"src", "dev", "test"};
    auto c = base_config(s);
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.k = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.tau = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.seeds = {1, 2};
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.mode = ExperimentMode::TagsetExtension;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.source_train.clear();
    EXPECT_THROW(bad.validate(), Error);
    bad.use_transitions = false;
    EXPECT_NO_THROW(bad.validate());
}

TEST(RunStage, TagsErrors) {
    try {
        run_stage("predict", [] { throw Error("boom"); });
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "predict");
        EXPECT_EQ(std::string(e.what()), "[predict] boom");
    }
    // inner stage tags survive
    try {
        run_stage("outer", [] { run_stage("inner", [] { throw Error("x"); }); });
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "inner");
    }
    EXPECT_EQ(run_stage("ok", [] { return 7; }), 7);
}

TEST(RunParallel, KeepsOrderAndPropagates) {
    auto r = run_parallel<std::size_t>(50, 4, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(r[i], i * i);
    EXPECT_TRUE(run_parallel<int>(0, 3, [](std::size_t) { return 1; }).empty());
    EXPECT_THROW(run_parallel<int>(10, 3,
                                   [](std::size_t i) {
                                       if (i == 7) throw Error("seven");
                                       return 0;
                                   }),
                 Error);
}

TEST(RunPredict, AblationMatchesPlainNearestNeighbor) {
    Xorshift64Star rng(4);
    Corpus pool = testing::separable_corpus(rng, 30, 2);
    auto table = hash_featurize(pool, 64, 1);
    auto support = greedy_sample(pool, 1, 3);
    auto classes = compute_tag_set(pool).classes;
    auto index = SupportIndex::build(support, table, classes);
    auto rows = detail::iota(pool.size());

    auto plain = run_predict(index, pool, rows, table, nullptr, DecodingConfig{1.0, false});
    for (std::size_t i = 0; i < pool.size(); ++i) EXPECT_EQ(plain[i], nnshot_predict(token_vectors(table, i), index));

    // uniform transitions cannot change the per-token argmax; tokens whose two
    // nearest classes are within rounding of each other are skipped
    auto uniform = uniform_transitions(classes);
    auto decoded = run_predict(index, pool, rows, table, &uniform, DecodingConfig{1.0, true});
    std::size_t compared = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto em = sentence_emissions(token_vectors(table, i), index);
        for (std::size_t t = 0; t < pool[i].size(); ++t) {
            auto d = em[t].min_dists;
            std::sort(d.begin(), d.end());
            if (d[1] - d[0] < 1e-9) continue;
            ++compared;
            EXPECT_EQ(decoded[i][t], plain[i][t]);
        }
    }
    EXPECT_GT(compared, 100u);

    auto via_support = run_predict(support, table, pool, table, nullptr, DecodingConfig{1.0, false}, classes);
    EXPECT_EQ(via_support, plain);
}

TEST(RunPredict, Errors) {
    Xorshift64Star rng(4);
    Corpus pool = testing::separable_corpus(rng, 10, 2);
    auto table = hash_featurize(pool, 64, 1);
    auto classes = compute_tag_set(pool).classes;
    auto index = SupportIndex::build(greedy_sample(pool, 1, 3), table, classes);
    auto rows = detail::iota(pool.size());

    EXPECT_THROW(run_predict(index, pool, rows, table, nullptr, DecodingConfig{}), Error);
    auto other = uniform_transitions({"X", "Y"});
    EXPECT_THROW(run_predict(index, pool, rows, table, &other, DecodingConfig{}), Error);

    auto short_table = hash_featurize(Corpus(pool.begin(), pool.begin() + 7), 64, 1);
    try {
        run_predict(index, pool, rows, short_table, nullptr, DecodingConfig{1.0, false});
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("3 test sentence(s): 7, 8, 9"), std::string::npos) << e.what();
    }
}

TEST(RunExperiment, SeparableDomainTransfer) {
    auto s = separable_splits(1);
    auto cfg = base_config(s);
    auto res = run_experiment(cfg);
    EXPECT_EQ(res.report.runs.size(), 3u);
    EXPECT_EQ(res.supports.size(), 3u);
    EXPECT_GE(res.report.mean_f1, 0.95);
    ASSERT_TRUE(res.transitions.has_value());
    EXPECT_EQ(res.transitions->states.classes, res.classes);

    cfg.use_transitions = false;
    EXPECT_GE(run_experiment(cfg).report.mean_f1, 0.9);
}

TEST(RunExperiment, DeterministicAcrossThreadCounts) {
    auto s = separable_splits(2);
    auto cfg = base_config(s);
    cfg.k = 1;
    auto a = run_experiment(cfg);
    cfg.threads = 3;
    auto b = run_experiment(cfg);
    ASSERT_EQ(a.report.runs.size(), b.report.runs.size());
    for (std::size_t i = 0; i < a.report.runs.size(); ++i) {
        EXPECT_EQ(a.supports[i], b.supports[i]);
        EXPECT_EQ(a.report.runs[i].micro.f1, b.report.runs[i].micro.f1);
    }
    cfg.seeds = {10, 11, 12};
    auto c = run_experiment(cfg);
    EXPECT_EQ(c.supports[0].seed, 10u);
}

TEST(RunExperiment, TagsetExtensionHidesNonTargetClasses) {
    auto s = separable_splits(3);
    auto cfg = base_config(s);
    cfg.mode = ExperimentMode::TagsetExtension;
    cfg.target_classes = {"LOC"};
    auto res = run_experiment(cfg);
    EXPECT_EQ(res.classes, (std::vector<std::string>{"LOC"}));
    for (const auto& run : res.report.runs) {
        EXPECT_EQ(run.per_class.count("PER"), 0u);
        EXPECT_EQ(run.per_class.count("ORG"), 0u);
    }
    for (const auto& sup : res.supports)
        for (const auto& sent : sup.sentences)
            for (const auto& t : sent.tags) EXPECT_TRUE(t.is_outside() || t.cls == "LOC");
}

TEST(RunExperiment, Episodes) {
    auto s = separable_splits(4);
    auto cfg = base_config(s);
    cfg.mode = ExperimentMode::Episodes;
    cfg.target_dev.clear();
    cfg.n_episodes = 100;
    cfg.k = 1;
    auto res = run_experiment(cfg);
    EXPECT_EQ(res.report.runs.size(), 100u);
    EXPECT_GT(res.report.mean_f1, 0.8);
    auto again = run_experiment(cfg);
    EXPECT_EQ(again.report.mean_f1, res.report.mean_f1);
}

TEST(RunExperiment, EmbeddingFilesAreUsed) {
    auto s = separable_splits(5);
    auto cfg = base_config(s);
    auto dev = read_corpus(s.dev), test = read_corpus(s.test);
    auto dev_emb = (work_dir() / "dev5.emb").string(), test_emb = (work_dir() / "test5.emb").string();
    write_embeddings(dev_emb, hash_featurize(dev, 128, 1));
    write_embeddings(test_emb, hash_featurize(test, 128, 1));
    cfg.dev_embeddings = dev_emb;
    cfg.test_embeddings = test_emb;
    EXPECT_GE(run_experiment(cfg).report.mean_f1, 0.95);

    // embeddings of the wrong corpus are rejected at the embedding stage
    cfg.test_embeddings = dev_emb;
    try {
        run_experiment(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "embed-test");
    }
}

TEST(RunExperiment, StageErrors) {
    auto s = separable_splits(6);
    auto cfg = base_config(s);
    cfg.target_test = (work_dir() / "missing.conll").string();
    try {
        run_experiment(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "load-test");
    }
    cfg = base_config(s);
    cfg.k = 0;
    try {
        run_experiment(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
    }
    cfg = base_config(s);
    cfg.target_dev = write_corpus("all_o.conll", parse_conll("a\tO\nb\tO\n"));
    try {
        run_experiment(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "tag-set");
    }
}

}  // namespace
}  // namespace structshot
