#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sit/cli.hpp"

using namespace sit;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("sit_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

const char* kDeskConfig =
    "# tiny model\n"
    "data.profile = desk\n"
    "model.d_model = 16\n"
    "model.heads = 2\n"
    "model.layers = 1\n"
    "model.latent_dim = 4\n"
    "model.ff_width = 32\n"
    "train.batch_size = 32\n"
    "train.epochs = 2\n"
    "train.augment = false\n";

// Writes a synthetic scene, the desk config, and returns the directory.
fs::path workspace(const std::string& name) {
    const auto dir = fresh_dir(name);
    spit(dir / "desk.cfg", kDeskConfig);
    for (const auto& [file, scenario] : std::vector<std::pair<std::string, std::string>>{
             {"alpha.txt", "mixed"}, {"beta.txt", "linear"}, {"gamma.txt", "crossing"}}) {
        SynthConfig s;
        s.scenario = scenario;
        s.agents = 4;
        s.frames = 14;
        fs::create_directories(dir / "data");
        spit(dir / "data" / file, format_trajectory_file(synthesize(s)));
    }
    return dir;
}

}  // namespace

TEST(Config, DefaultsAndProfileOrder) {
    const RunConfig d;
    EXPECT_EQ(d.train.batch_size, 100u);
    EXPECT_EQ(d.train.epochs, 100u);
    EXPECT_EQ(d.profile.obs_len, 8u);
    EXPECT_EQ(d.profile.pred_len, 12u);
    // data.profile is applied first even when written last.
    const RunConfig c = parse_run_config("data.pred_len = 5\ndata.profile = nuscenes\n");
    EXPECT_EQ(c.profile.dt, 0.5);
    EXPECT_EQ(c.profile.obs_len, 8u);
    EXPECT_EQ(c.profile.pred_len, 5u);
    EXPECT_EQ(c.resolved_model().pred_len, 5u);
}

TEST(Config, LiteralProfiles) {
    EXPECT_EQ(dataset_profile("nuscenes_literal").obs_len, 6u);
    EXPECT_EQ(dataset_profile("eth_ucy_literal").pred_len, 8u);
    EXPECT_THROW(dataset_profile("kitti"), ConfigError);
}

TEST(Config, AllSections) {
    const RunConfig c = parse_run_config(
        "model.layers = 2\nmodel.use_edge = false\nmodel.loss = norm\ntrain.lr0 = 0.002\ntrain.decay_rate = 0.9\n"
        "eval.mode = stochastic\neval.n = 7\neval.horizons = 1, 2,3\neval.select = per_metric\n"
        "paths.train = a.txt, b.txt\npaths.out = results\nrun.seed = 9\n");
    EXPECT_EQ(c.model.enc_layers, 2u);
    EXPECT_EQ(c.model.dec_layers, 2u);
    EXPECT_FALSE(c.model.use_edge);
    EXPECT_EQ(c.model.loss, LossKind::norm);
    EXPECT_EQ(c.train.lr0, 0.002);
    EXPECT_EQ(c.eval.mode, InferMode::stochastic);
    EXPECT_EQ(c.eval.n, 7u);
    EXPECT_EQ(c.eval.horizons, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(c.eval.select, BestOfSelect::per_metric);
    EXPECT_EQ(c.train_paths.size(), 2u);
    EXPECT_EQ(c.out, fs::path("results"));
    EXPECT_EQ(c.seed, 9u);
}

TEST(Config, ErrorsNameTheKey) {
    try {
        parse_run_config("train.batchsize = 3\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.batchsize"), std::string::npos);
    }
    EXPECT_THROW(parse_run_config("train.epochs = many\n"), ConfigError);
    EXPECT_THROW(parse_run_config("just text\n"), ConfigError);
    EXPECT_THROW(parse_run_config("epochs = 3\n"), ConfigError);
    RunConfig bad = parse_run_config("model.d_model = 10\nmodel.heads = 4\n");
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Synth, LinearSingleAgentIsConstantVelocity) {
    SynthConfig s;
    s.agents = 1;
    s.frames = 12;
    const Scene scene = synthesize(s);
    const auto& track = scene.tracks().at(1);
    ASSERT_EQ(track.size(), 12u);
    std::vector<Vec2> pts;
    for (const auto& [_, p] : track) pts.push_back(p);
    const Vec2 step = pts[1] - pts[0];
    for (std::size_t i = 1; i < pts.size(); ++i) {
        EXPECT_NEAR((pts[i] - pts[i - 1]).x, step.x, 1e-12);
        EXPECT_NEAR((pts[i] - pts[i - 1]).y, step.y, 1e-12);
    }
}

TEST(Synth, CrossingPairsComeWithinRadius) {
    SynthConfig s;
    s.scenario = "crossing";
    s.agents = 2;
    const Scene scene = synthesize(s);
    double closest = 1e9;
    for (const auto& [f, peds] : scene.frames()) closest = std::min(closest, distance(peds.at(1), peds.at(2)));
    EXPECT_LT(closest, kDefaultAttentionRadius);
}

TEST(Synth, CrossingAgentsSidestepAwayFromEachOther) {
    SynthConfig s;
    s.scenario = "crossing";
    s.agents = 40;
    const Scene scene = synthesize(s);
    for (PedId a = 1; a < 40; a += 2) {
        const auto& ta = scene.tracks().at(a);
        const auto& tb = scene.tracks().at(a + 1);
        const double start = distance(ta.begin()->second, tb.begin()->second);
        const double end = distance(ta.rbegin()->second, tb.rbegin()->second);
        EXPECT_GT(start, 1.0);
        EXPECT_GT(end, 1.0);
    }
}

TEST(Synth, DeterministicRoundTripAndNamedErrors) {
    for (const auto& name : synth_scenarios()) {
        SynthConfig s;
        s.scenario = name;
        s.noise = 0.05;
        s.seed = 12;
        const std::string a = format_trajectory_file(synthesize(s));
        EXPECT_EQ(a, format_trajectory_file(synthesize(s))) << name;
        const Scene back = parse_trajectory_file(a, s.dt);
        EXPECT_EQ(format_trajectory_file(back), a) << name;
    }
    SynthConfig bad;
    bad.scenario = "zigzag";
    try {
        synthesize(bad);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("multimodal"), std::string::npos);
    }
}

TEST(Synth, MultimodalBranchesBothWays) {
    SynthConfig s;
    s.scenario = "multimodal";
    s.agents = 40;
    s.frames = 10;
    const Scene scene = synthesize(s);
    int left = 0, right = 0;
    for (const auto& [ped, track] : scene.tracks()) {
        std::vector<Vec2> p;
        for (const auto& [_, v] : track) p.push_back(v);
        const Vec2 before = p[4] - p[3];
        const Vec2 after = p[6] - p[5];
        const double cross = before.x * after.y - before.y * after.x;
        (cross > 0 ? left : right) += 1;
    }
    EXPECT_GT(left, 5);
    EXPECT_GT(right, 5);
}

TEST(Cli, TrainOneEpochWritesCheckpointDeterministically) {
    const auto dir = workspace("train");
    const std::string data = (dir / "data" / "alpha.txt").string();
    const std::string before = slurp(data);
    const auto a = run_cli({"train", "--config", (dir / "desk.cfg").string(), "--epochs", "1", "--out",
                            (dir / "run1").string(), data});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_TRUE(fs::exists(dir / "run1" / "checkpoint.txt"));
    EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 3);
    const auto log = slurp(dir / "run1" / "loss_log.csv");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
    const auto b = run_cli({"train", "--config", (dir / "desk.cfg").string(), "--epochs", "1", "--out",
                            (dir / "run2").string(), data});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(slurp(dir / "run1" / "checkpoint.txt"), slurp(dir / "run2" / "checkpoint.txt"));
    EXPECT_EQ(slurp(data), before);
    fs::remove_all(dir);
}

TEST(Cli, MissingDatasetNamesPath) {
    const auto dir = workspace("missing");
    const auto r = run_cli({"train", "--config", (dir / "desk.cfg").string(), "--out", (dir / "o").string(),
                            (dir / "nope.txt").string()});
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(r.err.rfind("error[io]: ", 0), 0u);
    EXPECT_NE(r.err.find("nope.txt"), std::string::npos);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
    fs::remove_all(dir);
}

TEST(Cli, ErrorsAreSingleLineWithKind) {
    const auto dir = workspace("errors");
    spit(dir / "bad.cfg", "train.speed = 3\n");
    const auto r = run_cli({"train", "--config", (dir / "bad.cfg").string(), "x.txt"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error[config]: ", 0), 0u);
    EXPECT_NE(r.err.find("train.speed"), std::string::npos);
    const auto usage = run_cli({"frobnicate"});
    EXPECT_NE(usage.code, 0);
    EXPECT_EQ(usage.err.rfind("error[usage]: ", 0), 0u);
    EXPECT_EQ(std::count(usage.err.begin(), usage.err.end(), '\n'), 1);
    const auto synth = run_cli({"synth", "zigzag", "--out", (dir / "z.txt").string()});
    EXPECT_NE(synth.err.find("linear, turning, mixed, crossing, multimodal"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, EvaluateModesHorizonsAndMismatch) {
    const auto dir = workspace("evaluate");
    const std::string cfg = (dir / "desk.cfg").string();
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "run").string(),
                       (dir / "data" / "alpha.txt").string()})
                  .code,
              0);
    const std::string ckpt = (dir / "run" / "checkpoint.txt").string();
    const std::string test = (dir / "data" / "beta.txt").string();

    auto r = run_cli({"evaluate", "--checkpoint", ckpt, "--out", (dir / "ev").string(), test});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("deterministic"), std::string::npos);
    EXPECT_EQ(r.out.find("best-of"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "ev" / "report.csv"));
    EXPECT_TRUE(fs::exists(dir / "ev" / "trajectories.txt"));

    r = run_cli({"evaluate", "--checkpoint", ckpt, "--config", cfg, "--mode", "stochastic", "--n", "4",
                 "--horizons", "0.4,0.8,1.2", "--out", (dir / "ev2").string(), test});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("best-of-4"), std::string::npos);
    for (const char* col : {"MAD@0.4s", "MAD@0.8s", "MAD@1.2s", "FAD@0.4s", "FAD@0.8s", "FAD@1.2s"})
        EXPECT_NE(r.out.find(col), std::string::npos) << col;
    const std::string csv = slurp(dir / "ev2" / "report.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);

    spit(dir / "wide.cfg", std::string(kDeskConfig) + "model.d_model = 32\n");
    r = run_cli({"evaluate", "--checkpoint", ckpt, "--config", (dir / "wide.cfg").string(), test});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error[data]: ", 0), 0u);
    EXPECT_NE(r.err.find("model.d_model 32 (config) vs 16 (checkpoint)"), std::string::npos);

    r = run_cli({"evaluate", "--checkpoint", ckpt, "--horizons", "5", test});
    EXPECT_EQ(r.err.rfind("error[contract]: ", 0), 0u);
    fs::remove_all(dir);
}

TEST(Cli, LeaveOneOutOverDirectory) {
    const auto dir = workspace("loo");
    const auto r = run_cli({"loo", "--config", (dir / "desk.cfg").string(), "--epochs", "1", "--out",
                            (dir / "loo").string(), (dir / "data").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* name : {"alpha", "beta", "gamma"}) {
        EXPECT_TRUE(fs::exists(dir / "loo" / (std::string(name) + "_report.csv"))) << name;
        EXPECT_TRUE(fs::exists(dir / "loo" / (std::string(name) + "_trajectories.txt"))) << name;
        EXPECT_NE(r.out.find(std::string("fold ") + name), std::string::npos);
    }
    const std::string csv = slurp(dir / "loo" / "loo_report.csv");
    EXPECT_NE(csv.find("\navg,"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

    const auto again = run_cli({"loo", "--config", (dir / "desk.cfg").string(), "--epochs", "1", "--out",
                                (dir / "loo2").string(), (dir / "data").string()});
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(slurp(dir / "loo2" / "loo_report.csv"), csv);

    fs::create_directories(dir / "single");
    fs::copy_file(dir / "data" / "alpha.txt", dir / "single" / "alpha.txt");
    const auto one = run_cli({"loo", "--config", (dir / "desk.cfg").string(), (dir / "single").string()});
    EXPECT_EQ(one.err.rfind("error[contract]: ", 0), 0u);
    fs::remove_all(dir);
}

TEST(Cli, SynthWritesParsableFile) {
    const auto dir = fresh_dir("synth");
    const auto r = run_cli({"synth", "crossing", "--agents", "4", "--frames", "20", "--seed", "3", "--out",
                            (dir / "x.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const Scene s = parse_trajectory_file(slurp(dir / "x.txt"), 0.4);
    EXPECT_EQ(s.size(), 80u);
    fs::remove_all(dir);
}

TEST(Cli, GradcheckCommandPasses) {
    const auto r = run_cli({"gradcheck", "--coords", "50"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("ok   sit_model_loss"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
