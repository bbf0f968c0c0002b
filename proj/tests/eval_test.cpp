#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sit/eval.hpp"
#include "sit/synth.hpp"

using namespace sit;

namespace {

const DatasetProfile kDesk{0.4, 4, 3, 10.0};

std::vector<Example> synth_examples(const std::string& scenario, std::size_t agents, std::uint64_t seed,
                                    std::size_t extra_frames = 2) {
    SynthConfig s;
    s.scenario = scenario;
    s.agents = agents;
    s.frames = kDesk.obs_len + kDesk.pred_len + extra_frames;
    s.seed = seed;
    return prepare_examples(synthesize(s, scenario + std::to_string(seed)), kDesk);
}

TrainConfig tiny_train(std::size_t epochs = 1) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 16;
    t.augment = false;
    return t;
}

std::vector<Vec2> transform(const std::vector<Vec2>& pts, double radians, Vec2 shift) {
    std::vector<Vec2> out;
    for (const auto& p : pts) out.push_back(rotate(p, radians) + shift);
    return out;
}

}  // namespace

TEST(Metrics, IdenticalIsZero) {
    const std::vector<Vec2> p{{1, 2}, {3, 4}};
    EXPECT_EQ(mad(p, p), 0.0);
    EXPECT_EQ(fad(p, p), 0.0);
}

TEST(Metrics, ThreeFourFive) {
    const std::vector<Vec2> truth{{0, 0}, {1, 1}, {2, 5}};
    std::vector<Vec2> pred;
    for (const auto& t : truth) pred.push_back(t + Vec2{3, 4});
    EXPECT_EQ(mad(pred, truth), 5.0);
    EXPECT_EQ(fad(pred, truth), 5.0);
    const std::vector<Vec2> last_only{{0, 0}, {1, 1}, {5, 9}};
    EXPECT_EQ(fad(last_only, truth), 5.0);
}

TEST(Metrics, HandAverage) {
    const std::vector<Vec2> truth{{0, 0}, {0, 0}};
    const std::vector<Vec2> pred{{1, 0}, {0, 2}};
    EXPECT_EQ(mad(pred, truth), 1.5);
}

TEST(Metrics, FadIgnoresEarlierSteps) {
    const std::vector<Vec2> truth{{0, 0}, {1, 0}, {2, 0}};
    std::vector<Vec2> pred{{0, 0}, {1, 0}, {2, 1}};
    const double f = fad(pred, truth);
    pred[0] = {100, -7};
    pred[1] = {-3, 40};
    EXPECT_EQ(fad(pred, truth), f);
}

TEST(Metrics, ShapeMismatchIsContractError) {
    const std::vector<Vec2> a{{0, 0}, {1, 0}};
    const std::vector<Vec2> b{{0, 0}};
    EXPECT_THROW(mad(a, b), ContractError);
    EXPECT_THROW(fad(a, b), ContractError);
}

TEST(Metrics, RigidMotionInvariance) {
    const std::vector<Vec2> truth{{0, 0}, {1, 0.5}, {2.5, 1}};
    const std::vector<Vec2> pred{{0.2, 0}, {1, 0.1}, {2, 1.7}};
    const auto pt = transform(pred, 1.1, {40, -3});
    const auto tt = transform(truth, 1.1, {40, -3});
    EXPECT_NEAR(mad(pt, tt), mad(pred, truth), 1e-12);
    EXPECT_NEAR(fad(pt, tt), fad(pred, truth), 1e-12);
}

TEST(ConstantVelocity, HandExtrapolation) {
    TrajectorySample s;
    s.obs = {StateVector{{-0.5, 0}, {}, {}}, StateVector{{0, 0}, {}, {}}};
    s.future.resize(3);
    const auto p = constant_velocity_predict(s, 0.5);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p[0].x, 0.5);
    EXPECT_EQ(p[1].x, 1.0);
    EXPECT_EQ(p[2].x, 1.5);
    EXPECT_EQ(p[2].y, 0.0);
}

TEST(ConstantVelocity, StationaryStaysPut) {
    TrajectorySample s;
    s.obs = {StateVector{{2, 3}, {}, {}}, StateVector{{2, 3}, {}, {}}, StateVector{{2, 3}, {}, {}}};
    s.future.resize(4);
    for (const auto& p : constant_velocity_predict(s, 0.4)) {
        EXPECT_EQ(p.x, 2.0);
        EXPECT_EQ(p.y, 3.0);
    }
}

TEST(ConstantVelocity, ExactOnLinearTracks) {
    const auto ex = synth_examples("linear", 5, 3);
    const auto set = constant_velocity_predictions(ex, kDesk.dt);
    const auto r = horizon_slice(set, {}, kDesk.dt);
    EXPECT_LT(r.horizons[0].mad, 1e-12);
    EXPECT_LT(r.horizons[0].fad, 1e-12);
}

TEST(Horizon, FullWindowEqualsPlainMetrics) {
    PredictionSet set;
    set.pred = {{{1, 0}, {2, 0}, {3, 1}}, {{0, 0}, {0, 1}, {0, 3}}};
    set.truth = {{{1, 0}, {2, 1}, {3, 0}}, {{0, 0}, {0, 0}, {0, 0}}};
    const auto r = horizon_slice(set, {1.2}, 0.4);
    ASSERT_EQ(r.horizons.size(), 1u);
    EXPECT_EQ(r.horizons[0].steps, 3u);
    EXPECT_NEAR(r.horizons[0].mad, (mad(set.pred[0], set.truth[0]) + mad(set.pred[1], set.truth[1])) / 2, 1e-15);
    EXPECT_NEAR(r.horizons[0].fad, (fad(set.pred[0], set.truth[0]) + fad(set.pred[1], set.truth[1])) / 2, 1e-15);
    const auto full = horizon_slice(set, {}, 0.4);
    EXPECT_EQ(full.horizons[0].mad, r.horizons[0].mad);
}

TEST(Horizon, OneSecondAtHalfSecondStepsAveragesTwoSteps) {
    PredictionSet set;
    set.pred = {{{1, 0}, {3, 0}, {9, 0}, {9, 0}, {9, 0}, {9, 0}}};
    set.truth = {{{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}}};
    const auto r = horizon_slice(set, {1.0, 2.0, 3.0}, 0.5);
    ASSERT_EQ(r.horizons.size(), 3u);
    EXPECT_EQ(r.horizons[0].steps, 2u);
    EXPECT_EQ(r.horizons[0].mad, 2.0);
    EXPECT_EQ(r.horizons[0].fad, 3.0);
    EXPECT_EQ(r.horizons[1].steps, 4u);
    EXPECT_EQ(r.horizons[2].steps, 6u);
}

TEST(Horizon, BeyondWindowIsContractError) {
    PredictionSet set;
    set.pred = {{{0, 0}, {0, 0}}};
    set.truth = set.pred;
    EXPECT_THROW(horizon_slice(set, {1.0}, 0.4), ContractError);
    EXPECT_THROW(horizon_slice(set, {-1.0}, 0.4), ContractError);
}

TEST(Evaluate, DeterministicIsInWorldFrame) {
    const auto ex = synth_examples("mixed", 4, 5);
    const SitModel m(ModelConfig::desk(), 2);
    const auto set = predict_deterministic(m, ex);
    ASSERT_EQ(set.size(), ex.size());
    for (std::size_t i = 0; i < ex.size(); ++i) {
        const auto& truth = set.truth[i];
        const auto world = denormalize_prediction(ex[i].sample.future, *ex[i].sample.norm);
        EXPECT_EQ(truth[0].x, world[0].x);
    }
    const Tensor raw = m.forward_infer(make_batch(std::span<const Example>(ex).first(1)), InferMode::deterministic);
    const auto p = to_points(raw)[0];
    EXPECT_NEAR(set.pred[0][1].x, p[1].x * 10.0 + ex[0].sample.anchor.x, 1e-9);
}

TEST(BestOfN, RejectsZeroDraws) {
    const auto ex = synth_examples("linear", 2, 1);
    const SitModel m(ModelConfig::desk(), 1);
    EXPECT_THROW(best_of_n(m, ex, 0, 1, kDesk.dt), ContractError);
}

TEST(BestOfN, SingleDrawEqualsOneStochasticEvaluation) {
    const auto ex = synth_examples("turning", 3, 4);
    const SitModel m(ModelConfig::desk(), 3);
    const auto draws = predict_stochastic(m, ex, 1, 77);
    const auto r = best_of_n_report(draws, 1, {}, kDesk.dt);
    PredictionSet single;
    for (std::size_t i = 0; i < ex.size(); ++i) {
        single.pred.push_back(draws.draws[i][0]);
        single.truth.push_back(draws.truth[i]);
    }
    EXPECT_EQ(r.horizons[0].mad, horizon_slice(single, {}, kDesk.dt).horizons[0].mad);
    // Sample 0's draw uses its own noise stream.
    auto rng = derived_rng(77, rng_purpose::eval_noise, 0);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> eps(m.config().latent_dim);
    for (auto& e : eps) e = n(rng);
    const Tensor noise({1, eps.size()}, eps);
    const auto p = to_points(
        m.forward_infer(make_batch(std::span<const Example>(ex).first(1)), InferMode::stochastic, &noise))[0];
    EXPECT_NEAR(draws.draws[0][0][2].x, p[2].x * 10.0 + ex[0].sample.anchor.x, 1e-9);
}

TEST(BestOfN, PrefixStableAndMonotoneInN) {
    const auto ex = synth_examples("mixed", 6, 9);
    const SitModel m(ModelConfig::desk(), 4);
    const auto draws = predict_stochastic(m, ex, 20, 5);
    const auto few = predict_stochastic(m, ex, 5, 5);
    for (std::size_t i = 0; i < ex.size(); ++i)
        for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(few.draws[i][k][2].x, draws.draws[i][k][2].x);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {1, 5, 10, 20}) {
        const double v = best_of_n_report(draws, n, {}, kDesk.dt).horizons[0].mad;
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(BestOfN, SelectionModes) {
    const auto ex = synth_examples("turning", 4, 2);
    const SitModel m(ModelConfig::desk(), 8);
    const auto draws = predict_stochastic(m, ex, 10, 3);
    const auto by_mad = best_of_n_report(draws, 10, {0.4, 1.2}, kDesk.dt, BestOfSelect::by_mad);
    const auto per = best_of_n_report(draws, 10, {0.4, 1.2}, kDesk.dt, BestOfSelect::per_metric);
    EXPECT_EQ(per.horizons[1].mad, by_mad.horizons[1].mad);
    EXPECT_LE(per.horizons[1].fad, by_mad.horizons[1].fad);
    EXPECT_LE(per.horizons[0].mad, by_mad.horizons[0].mad);
}

TEST(BestOfN, CollapsedPriorMatchesDeterministic) {
    const auto ex = synth_examples("mixed", 4, 6);
    SitModel m(ModelConfig::desk(), 5);
    const std::size_t z = m.config().latent_dim;
    Tensor w = m.params().get("prior.out.weight");
    Tensor b = m.params().get("prior.out.bias");
    for (std::size_t r = 0; r < w.dim(0); ++r)
        for (std::size_t c = z; c < 2 * z; ++c) w.mutable_data()[r * 2 * z + c] = 0.0;
    for (std::size_t c = z; c < 2 * z; ++c) b.mutable_data()[c] = -60.0;
    const auto det = horizon_slice(predict_deterministic(m, ex), {}, kDesk.dt);
    const auto best = best_of_n(m, ex, 20, 3, kDesk.dt);
    EXPECT_NEAR(best.horizons[0].mad, det.horizons[0].mad, 1e-4);
}

TEST(Reports, CsvAndTableLayout) {
    MetricReport r{"zara1", "deterministic", 10, {{1.0, 2, 0.5, 0.75}, {2.0, 5, 0.25, 1.5}}};
    const std::string csv = format_report_csv({r});
    EXPECT_EQ(csv, "dataset,mode,samples,horizon_s,steps,mad_m,fad_m\n"
                   "zara1,deterministic,10,1,2,0.5,0.75\n"
                   "zara1,deterministic,10,2,5,0.25,1.5\n");
    const std::string table = format_report_table({r});
    EXPECT_NE(table.find("MAD@1s"), std::string::npos);
    EXPECT_NE(table.find("FAD@2s"), std::string::npos);
    EXPECT_NE(table.find("0.750"), std::string::npos);
    EXPECT_EQ(horizon_label(12 * 0.1), "1.2");
}

TEST(Reports, TrajectoryDumpHasOneLinePerStep) {
    const auto ex = synth_examples("linear", 2, 1);
    const auto set = constant_velocity_predictions(ex, kDesk.dt);
    const std::string dump = format_trajectory_dump(set, ex);
    EXPECT_EQ(static_cast<std::size_t>(std::count(dump.begin(), dump.end(), '\n')), 1 + ex.size() * kDesk.pred_len);
}

TEST(LeaveOneOut, TwoDatasetsTwoDisjointRuns) {
    std::vector<NamedDataset> sets{{"b", synth_examples("linear", 2, 1)}, {"a", synth_examples("turning", 2, 2)}};
    std::vector<std::string> calls;
    const auto run = [&](const std::vector<const NamedDataset*>& train_sets, const NamedDataset& test) {
        EXPECT_EQ(train_sets.size(), 1u);
        const auto train_keys = sample_keys(train_sets[0]->examples);
        for (const auto& k : sample_keys(test.examples)) EXPECT_EQ(train_keys.count(k), 0u);
        calls.push_back(test.name);
        return MetricReport{test.name, "cv", test.examples.size(), {{1.2, 3, test.name == "a" ? 1.0 : 2.0, 4.0}}};
    };
    const auto r = leave_one_out(sets, run);
    EXPECT_EQ(calls, (std::vector<std::string>{"a", "b"}));
    ASSERT_EQ(r.folds.size(), 2u);
    EXPECT_EQ(r.folds[0].train, std::vector<std::string>{"b"});
    EXPECT_EQ(r.average.dataset, "avg");
    EXPECT_EQ(r.average.horizons[0].mad, 1.5);
    EXPECT_EQ(r.average.horizons[0].fad, 4.0);
}

TEST(LeaveOneOut, OrderPermutationLeavesReportsUnchanged) {
    const auto run = [](const std::vector<const NamedDataset*>& train_sets, const NamedDataset& test) {
        double v = static_cast<double>(test.examples.size());
        for (const auto* d : train_sets) v += 0.01 * static_cast<double>(d->examples.size()) * d->name.size();
        return MetricReport{test.name, "x", test.examples.size(), {{1.0, 1, v, v / 2}}};
    };
    std::vector<NamedDataset> sets{{"eth", synth_examples("linear", 2, 1)},
                                   {"hotel", synth_examples("linear", 3, 2)},
                                   {"zara1", synth_examples("linear", 4, 3)}};
    const auto a = leave_one_out(sets, run);
    std::reverse(sets.begin(), sets.end());
    const auto b = leave_one_out(sets, run);
    ASSERT_EQ(a.reports.size(), b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        EXPECT_EQ(a.reports[i].dataset, b.reports[i].dataset);
        EXPECT_EQ(a.reports[i].horizons[0].mad, b.reports[i].horizons[0].mad);
    }
    EXPECT_EQ(a.average.horizons[0].mad, b.average.horizons[0].mad);
}

TEST(LeaveOneOut, Contracts) {
    const auto run = [](const std::vector<const NamedDataset*>&, const NamedDataset& t) {
        return MetricReport{t.name, "x", 0, {}};
    };
    EXPECT_THROW(leave_one_out({{"only", {}}}, run), ContractError);
    EXPECT_THROW(leave_one_out({{"a", {}}, {"a", {}}}, run), ContractError);
}

TEST(Ablation, VariantsShareConfigAndReportParameters) {
    const auto train_set = synth_examples("crossing", 4, 1);
    const auto test_set = synth_examples("crossing", 2, 2);
    AblationOptions opt;
    opt.model = ModelConfig::desk();
    opt.train = tiny_train(1);
    opt.dt = kDesk.dt;
    opt.best_of = 3;
    const auto rows = ablation_run(train_set, test_set, opt);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.parameters, rows.front().parameters);
        EXPECT_EQ(r.best_of.has_value(), r.variant.cvae);
        EXPECT_EQ(r.deterministic.samples, test_set.size());
    }
    const std::string table = format_ablation_table(rows);
    EXPECT_NE(table.find("no-edge"), std::string::npos);
    EXPECT_NE(table.find("params"), std::string::npos);
    EXPECT_NE(table.find("note:"), std::string::npos);
}
