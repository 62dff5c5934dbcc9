#include "damtl/config.hpp"
#include "damtl/experiment.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace damtl;

namespace
{
    std::string error_message(const std::function<void()> &f)
    {
        try
        {
            f();
        }
        catch (const Error &e)
        {
            EXPECT_EQ(e.code(), ErrorCode::ConfigError) << e.what();
            return e.what();
        }
        ADD_FAILURE() << "expected a ConfigError";
        return {};
    }

    const char *kSynthetic = R"(# small synthetic run
experiment = synthetic
variants = damtl, sg
seeds = 1-2
groups = 2
nodes_per_group = 2
p = 3
sigma = 0.5
horizon = 5
cadence = 1
gamma = 0.01
delta1 = 1   # consensus weight
delta2 = 0.5
rate_exchange = 0.5
)";
} // namespace

TEST(Config, ParsesValuesAndComments)
{
    const auto kv = KeyValueFile::parse("a = 1.5  # note\n\n# full line\nname = x y\nflag = yes\nlist = 1, 2 ,3\n");
    EXPECT_DOUBLE_EQ(kv.get_double("a", 0.0), 1.5);
    EXPECT_EQ(kv.get_string("name", ""), "x y");
    EXPECT_TRUE(kv.get_bool("flag", false));
    EXPECT_EQ(kv.get_double_list("list"), (std::vector<double>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(kv.get_double("missing", 4.0), 4.0);
}

TEST(Config, ErrorsNameKeyAndLine)
{
    const auto msg = error_message([] {
        const auto kv = KeyValueFile::parse("a = 1\nb = oops\n", "f.txt");
        (void)kv.get_double("b", 0.0);
    });
    EXPECT_NE(msg.find("f.txt:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
    EXPECT_NE(error_message([] { KeyValueFile::parse("justtext\n"); }).find(":1:"), std::string::npos);
    EXPECT_NE(error_message([] { KeyValueFile::parse("a = 1\na = 2\n"); }).find("twice"), std::string::npos);
}

TEST(Config, RunConfigKeysAndValidation)
{
    const auto kv = KeyValueFile::parse("gamma = 1e-4\ndelta1 = 1500\nstep_schedule = constant\nstep_base = 0.5\n"
                                        "arrival = deterministic\nsafeguard = false\n");
    const auto cfg = parse_run_config(kv);
    EXPECT_EQ(cfg.gamma, 1e-4);
    EXPECT_EQ(cfg.delta1, 1500.0);
    EXPECT_EQ(cfg.step.kind, ScheduleKind::Constant);
    EXPECT_EQ(cfg.step.base, 0.5);
    EXPECT_EQ(cfg.arrival, ArrivalLaw::Deterministic);
    EXPECT_FALSE(cfg.safeguard);
    error_message([] { parse_run_config(KeyValueFile::parse("gamma = 0\n")); });
    error_message([] { parse_run_config(KeyValueFile::parse("horizon = -1\n")); });
    error_message([] { parse_run_config(KeyValueFile::parse("arrival = weibull\n")); });
}

TEST(Config, DescribeRoundTrips)
{
    RunConfig cfg;
    cfg.gamma = 3e-4;
    cfg.delta2 = 0.9;
    cfg.ridge = {ScheduleKind::Constant, 0.25};
    const auto back = parse_run_config(KeyValueFile::parse(describe(cfg)));
    EXPECT_EQ(describe(back), describe(cfg));
}

TEST(Experiment, VariantsZeroTheirPenalties)
{
    RunConfig cfg;
    cfg.delta1 = 3;
    cfg.delta2 = 4;
    EXPECT_EQ(apply_variant(cfg, Variant::Sg).delta1, 0.0);
    EXPECT_EQ(apply_variant(cfg, Variant::Sg).delta2, 0.0);
    EXPECT_EQ(apply_variant(cfg, Variant::SgTask).delta1, 0.0);
    EXPECT_EQ(apply_variant(cfg, Variant::SgTask).delta2, 4.0);
    EXPECT_EQ(apply_variant(cfg, Variant::SgConsensus).delta1, 3.0);
    EXPECT_EQ(apply_variant(cfg, Variant::SgConsensus).delta2, 0.0);
    EXPECT_EQ(apply_variant(cfg, Variant::Damtl).delta2, 4.0);
}

TEST(Experiment, SeedLists)
{
    EXPECT_EQ(parse_seed_list("1,3-5, 9"), (std::vector<std::uint64_t>{1, 3, 4, 5, 9}));
    EXPECT_TRUE(parse_seed_list("").empty());
    EXPECT_THROW(parse_seed_list("x"), Error);
    EXPECT_THROW(parse_seed_list("5-1"), Error);
}

TEST(Experiment, SpecParsingRejectsUnknownKeysAndBadValues)
{
    EXPECT_NE(error_message([] { parse_experiment_spec("experiment = synthetic\ncolour = red\n"); }).find("colour"),
              std::string::npos);
    error_message([] { parse_experiment_spec("experiment = synthetic\nvariants = damtl, sgd\n"); });
    EXPECT_NE(error_message([] { parse_experiment_spec("# comments only\n"); }).find("experiment"), std::string::npos);
    error_message([] { parse_experiment_spec("experiment = temperature\nsigma_max = 7\n"); });
    error_message([] { parse_experiment_spec("experiment = temperature\nsources = 1 2 300\n"); });
    error_message([] { parse_experiment_spec("experiment = tabular\n"); });
    error_message([] { parse_experiment_spec("experiment = synthetic\nsigma = 0\nlambda = 0\n"); });
}

TEST(Experiment, EmptySeedListFailsBeforeWritingFiles)
{
    const auto dir = testutil::scratch_dir("empty_seeds");
    auto spec = parse_experiment_spec(kSynthetic);
    spec.seeds.clear();
    spec.out_dir = (dir / "out").string();
    EXPECT_THROW(run_experiment(spec), Error);
    EXPECT_FALSE(std::filesystem::exists(dir / "out"));
}

TEST(Experiment, QuantilesMatchSortOracle)
{
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial)
    {
        std::vector<double> v(1 + static_cast<std::size_t>(trial % 9));
        for (double &x : v)
            x = nd(gen);
        for (double p : {0.25, 0.5, 0.75})
            EXPECT_DOUBLE_EQ(quantile(v, p), oracle::sorted_quantile(v, p));
    }
}

TEST(Experiment, SingleSeedMedianEqualsRun)
{
    auto spec = parse_experiment_spec(kSynthetic);
    const auto log = run_single(spec, Variant::Damtl, 1);
    const auto agg = aggregate({log});
    const auto u = log.series("U");
    ASSERT_EQ(agg.at("U").size(), u.size());
    for (std::size_t k = 0; k < u.size(); ++k)
    {
        EXPECT_EQ(agg.at("U")[k].median, u[k].second);
        EXPECT_EQ(agg.at("U")[k].q25, u[k].second);
    }
}

TEST(Experiment, VariantsShareTheirWorld)
{
    auto spec = parse_experiment_spec(kSynthetic);
    const auto a = build_problem(spec, 2);
    const auto b = build_problem(spec, 2);
    EXPECT_EQ(*a.w_star, *b.w_star);
    EXPECT_EQ(a.topology.edges(), b.topology.edges());
    // Without consensus/task streams the inner streams are identical across variants, so plain
    // SG and a run with zero-weight penalties walk the same path.
    RunConfig cfg = run_config_for(spec, Variant::Sg, 2);
    Simulation s1(a, cfg);
    s1.run();
    cfg.rate_consensus = 0.0;
    cfg.rate_task = 0.0;
    Simulation s2(b, cfg);
    s2.run();
    EXPECT_EQ(s1.live_estimates(), s2.live_estimates());
}

TEST(Experiment, RunWritesFilesAndSummarizeReproducesThem)
{
    const auto dir = testutil::scratch_dir("run");
    auto spec = parse_experiment_spec(kSynthetic);
    spec.out_dir = (dir / "out").string();
    const auto res = run_experiment(spec);
    EXPECT_EQ(res.files.metric_files.size(), 4U);
    for (const auto &f : res.files.metric_files)
    {
        EXPECT_TRUE(std::filesystem::exists(f));
        auto meta = f;
        meta.replace_extension(".meta");
        const auto text = io::read_file(meta.string());
        EXPECT_NE(text.find("config_hash = "), std::string::npos);
        EXPECT_NE(text.find("seed = "), std::string::npos);
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "curves" / "curve_damtl_U.csv"));
    const auto agg_before = io::read_file((dir / "out" / "aggregate.csv").string());
    const auto summary_before = io::read_file((dir / "out" / "summary.txt").string());
    const auto table = summarize(dir / "out");
    EXPECT_EQ(io::read_file((dir / "out" / "aggregate.csv").string()), agg_before);
    EXPECT_EQ(table, summary_before);
    const auto curve = io::read_file((dir / "out" / "curves" / "curve_sg_U.csv").string());
    EXPECT_EQ(curve.substr(0, curve.find('\n')), "time,median,q25,q75");
}

TEST(Experiment, TabularSpecLoadsNodes)
{
    const auto dir = testutil::scratch_dir("tabular");
    {
        std::ofstream data(dir / "d.csv");
        data << "school,score5,gender,math\n";
        Rng rng(1);
        for (int r = 0; r < 30; ++r)
            data << "s" << r % 3 << ',' << rng.normal() << ',' << rng.normal() << ',' << rng.normal() << '\n';
        std::ofstream map(dir / "g.csv");
        map << "node,group\ns0,1\ns1,2\ns2,2\n";
    }
    std::ofstream(dir / "spec.txt") << "experiment = tabular\ndata_file = d.csv\ngroup_map = g.csv\n"
                                       "predictors = gender, math\nhorizon = 3\n";
    const auto spec = load_experiment_spec((dir / "spec.txt").string());
    const auto pr = build_problem(spec, 1);
    EXPECT_EQ(pr.topology.node_count(), 3);
    EXPECT_EQ(pr.topology.group_count(), 2);
    EXPECT_EQ(pr.p(), 3);
    const auto log = run_single(spec, Variant::Damtl, 1);
    EXPECT_TRUE(log.last("Err_g2").has_value());
}
