#pragma once

// MAD/FAD metrics in world meters, horizon slicing, the constant-velocity
// baseline, deterministic and best-of-N evaluation, leave-one-out folds and
// the component ablation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sit/train.hpp"

namespace sit {

namespace detail {

inline void check_same_length(std::span<const Vec2> pred, std::span<const Vec2> truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw ContractError("prediction has " + std::to_string(pred.size()) + " steps, ground truth has " +
                            std::to_string(truth.size()));
    }
}

}  // namespace detail

// Mean over steps of the Euclidean distance.
inline double mad(std::span<const Vec2> pred, std::span<const Vec2> truth) {
    detail::check_same_length(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += distance(pred[i], truth[i]);
    return s / static_cast<double>(pred.size());
}

// Euclidean distance at the final step.
inline double fad(std::span<const Vec2> pred, std::span<const Vec2> truth) {
    detail::check_same_length(pred, truth);
    return distance(pred.back(), truth.back());
}

// p_{t+k} = p_t + k * v * dt with v the last observed finite difference.
// Output is in the sample's own frame (world or normalized).
inline std::vector<Vec2> constant_velocity_predict(const TrajectorySample& sample, double dt) {
    if (sample.obs.size() < 2) throw ContractError("constant velocity needs >= 2 observed steps");
    const Vec2 last = sample.obs.back().pos;
    const Vec2 step = sample.obs.back().pos - sample.obs[sample.obs.size() - 2].pos;
    const Vec2 vel = step / dt;
    std::vector<Vec2> out;
    for (std::size_t k = 1; k <= sample.pred_len(); ++k) out.push_back(last + vel * (static_cast<double>(k) * dt));
    return out;
}

// World-frame predictions and ground truth for a set of samples.
struct PredictionSet {
    std::vector<std::vector<Vec2>> pred;
    std::vector<std::vector<Vec2>> truth;
    std::size_t size() const { return pred.size(); }
};

struct HorizonMetric {
    double seconds = 0.0;
    std::size_t steps = 0;
    double mad = 0.0;
    double fad = 0.0;
};

struct MetricReport {
    std::string dataset;
    std::string mode;  // "deterministic", "best-of-N", "cv", ...
    std::size_t samples = 0;
    std::vector<HorizonMetric> horizons;
};

// Horizon in seconds at 6 significant digits ("1.2", not 1.2000000000000002).
inline std::string horizon_label(double seconds) {
    std::ostringstream os;
    os << std::setprecision(6) << seconds;
    return os.str();
}

// Number of steps covering `seconds` (nearest step, at least one).
inline std::size_t horizon_steps(double seconds, double dt, std::size_t pred_len) {
    if (!(seconds > 0.0)) throw ContractError("horizon must be positive");
    const double window = static_cast<double>(pred_len) * dt;
    if (seconds > window + 1e-9) {
        throw ContractError("horizon " + horizon_label(seconds) + " s exceeds the prediction window of " +
                            horizon_label(window) + " s");
    }
    const auto steps = static_cast<std::size_t>(std::llround(seconds / dt));
    return std::clamp<std::size_t>(steps, 1, pred_len);
}

// MAD over the first k steps and FAD at step k for each horizon; an empty
// horizon list means the full window.
inline MetricReport horizon_slice(const PredictionSet& set, std::vector<double> horizons, double dt,
                                  std::string dataset = {}, std::string mode = {}) {
    if (set.pred.size() != set.truth.size()) throw ContractError("prediction and truth counts differ");
    MetricReport report{std::move(dataset), std::move(mode), set.size(), {}};
    const std::size_t pred_len = set.size() ? set.truth.front().size() : 0;
    if (horizons.empty()) horizons.push_back(static_cast<double>(pred_len) * dt);
    for (double h : horizons) {
        HorizonMetric m{h, horizon_steps(h, dt, pred_len), 0.0, 0.0};
        for (std::size_t i = 0; i < set.size(); ++i) {
            const std::span<const Vec2> p(set.pred[i].data(), m.steps);
            const std::span<const Vec2> t(set.truth[i].data(), m.steps);
            m.mad += mad(p, t);
            m.fad += fad(p, t);
        }
        if (set.size()) {
            m.mad /= static_cast<double>(set.size());
            m.fad /= static_cast<double>(set.size());
        }
        report.horizons.push_back(m);
    }
    return report;
}

inline std::vector<Vec2> world_truth(const TrajectorySample& s) {
    return s.norm ? denormalize_prediction(s.future, *s.norm) : s.future;
}

inline std::vector<Vec2> to_world(std::span<const Vec2> pred, const TrajectorySample& s) {
    return s.norm ? denormalize_prediction(pred, *s.norm) : std::vector<Vec2>(pred.begin(), pred.end());
}

inline PredictionSet constant_velocity_predictions(std::span<const Example> examples, double dt) {
    PredictionSet set;
    for (const auto& ex : examples) {
        set.pred.push_back(to_world(constant_velocity_predict(ex.sample, dt), ex.sample));
        set.truth.push_back(world_truth(ex.sample));
    }
    return set;
}

inline constexpr std::size_t kEvalBatch = 256;

// Prior-mean decoding.
inline PredictionSet predict_deterministic(const SitModel& model, std::span<const Example> examples) {
    NoGradScope no_grad;
    PredictionSet set;
    for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
        const auto chunk = examples.subspan(start, std::min(kEvalBatch, examples.size() - start));
        const auto points = to_points(model.forward_infer(make_batch(chunk), InferMode::deterministic));
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            set.pred.push_back(to_world(points[i], chunk[i].sample));
            set.truth.push_back(world_truth(chunk[i].sample));
        }
    }
    return set;
}

// All `n` stochastic draws per sample, world frame: draws[sample][k].
// Sample i's noise comes from its own stream seeded by (seed, i), consumed
// in draw order, so the first m draws are the same for every n >= m.
struct StochasticDraws {
    std::vector<std::vector<std::vector<Vec2>>> draws;
    std::vector<std::vector<Vec2>> truth;
};

inline StochasticDraws predict_stochastic(const SitModel& model, std::span<const Example> examples, std::size_t n,
                                          std::uint64_t seed) {
    if (n < 1) throw ContractError("best-of-n needs n >= 1");
    NoGradScope no_grad;
    const std::size_t z = model.config().latent_dim;
    StochasticDraws out;
    out.draws.resize(examples.size());
    for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
        const std::size_t count = std::min(kEvalBatch, examples.size() - start);
        const auto chunk = examples.subspan(start, count);
        const Batch batch = make_batch(chunk);
        std::vector<std::mt19937_64> streams;
        std::vector<std::normal_distribution<double>> normals(count);
        for (std::size_t i = 0; i < count; ++i) streams.push_back(derived_rng(seed, rng_purpose::eval_noise, start + i));
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<double> eps(count * z);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < z; ++j) eps[i * z + j] = normals[i](streams[i]);
            const Tensor noise({count, z}, std::move(eps));
            const auto points = to_points(model.forward_infer(batch, InferMode::stochastic, &noise));
            for (std::size_t i = 0; i < count; ++i) out.draws[start + i].push_back(to_world(points[i], chunk[i].sample));
        }
        for (std::size_t i = 0; i < count; ++i) out.truth.push_back(world_truth(chunk[i].sample));
    }
    return out;
}

enum class BestOfSelect { by_mad, per_metric };

// Best-of-n report over the first `n` draws. by_mad picks, per sample, the
// draw with the lowest full-window MAD and scores that draw at every
// horizon; per_metric takes the minimum of each metric independently.
inline MetricReport best_of_n_report(const StochasticDraws& d, std::size_t n, std::vector<double> horizons, double dt,
                                     BestOfSelect select = BestOfSelect::by_mad, std::string dataset = {}) {
    if (n < 1) throw ContractError("best-of-n needs n >= 1");
    const std::string mode = "best-of-" + std::to_string(n);
    if (select == BestOfSelect::by_mad) {
        PredictionSet chosen;
        for (std::size_t i = 0; i < d.draws.size(); ++i) {
            if (d.draws[i].size() < n) throw ContractError("fewer stored draws than requested n");
            std::size_t best = 0;
            double best_mad = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) {
                const double m = mad(d.draws[i][k], d.truth[i]);
                if (m < best_mad) {
                    best_mad = m;
                    best = k;
                }
            }
            chosen.pred.push_back(d.draws[i][best]);
            chosen.truth.push_back(d.truth[i]);
        }
        return horizon_slice(chosen, std::move(horizons), dt, std::move(dataset), mode);
    }
    MetricReport report{std::move(dataset), mode + "/per-metric", d.draws.size(), {}};
    const std::size_t pred_len = d.truth.empty() ? 0 : d.truth.front().size();
    if (horizons.empty()) horizons.push_back(static_cast<double>(pred_len) * dt);
    for (double h : horizons) {
        HorizonMetric m{h, horizon_steps(h, dt, pred_len), 0.0, 0.0};
        for (std::size_t i = 0; i < d.draws.size(); ++i) {
            double best_mad = std::numeric_limits<double>::infinity();
            double best_fad = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) {
                const std::span<const Vec2> p(d.draws[i][k].data(), m.steps);
                const std::span<const Vec2> t(d.truth[i].data(), m.steps);
                best_mad = std::min(best_mad, mad(p, t));
                best_fad = std::min(best_fad, fad(p, t));
            }
            m.mad += best_mad;
            m.fad += best_fad;
        }
        if (!d.draws.empty()) {
            m.mad /= static_cast<double>(d.draws.size());
            m.fad /= static_cast<double>(d.draws.size());
        }
        report.horizons.push_back(m);
    }
    return report;
}

inline MetricReport best_of_n(const SitModel& model, std::span<const Example> examples, std::size_t n,
                              std::uint64_t seed, double dt, std::vector<double> horizons = {},
                              BestOfSelect select = BestOfSelect::by_mad, std::string dataset = {}) {
    return best_of_n_report(predict_stochastic(model, examples, n, seed), n, std::move(horizons), dt, select,
                            std::move(dataset));
}

// ---------------------------------------------------------------------------
// Report output

// One CSV record per (dataset, mode, horizon).
inline std::string format_report_csv(const std::vector<MetricReport>& reports) {
    std::string out = "dataset,mode,samples,horizon_s,steps,mad_m,fad_m\n";
    for (const auto& r : reports)
        for (const auto& h : r.horizons) {
            out += r.dataset + "," + r.mode + "," + std::to_string(r.samples) + "," + horizon_label(h.seconds) + "," +
                   std::to_string(h.steps) + "," + settings::real(h.mad) + "," + settings::real(h.fad) + "\n";
        }
    return out;
}

// Aligned table: MAD columns for every horizon, then FAD columns.
inline std::string format_report_table(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    if (reports.empty()) return {};
    const auto& hs = reports.front().horizons;
    os << std::left << std::setw(12) << "dataset" << std::setw(16) << "mode";
    for (const auto& h : hs) os << std::right << std::setw(10) << ("MAD@" + horizon_label(h.seconds) + "s");
    for (const auto& h : hs) os << std::right << std::setw(10) << ("FAD@" + horizon_label(h.seconds) + "s");
    os << '\n';
    os << std::fixed << std::setprecision(3);
    for (const auto& r : reports) {
        os << std::left << std::setw(12) << r.dataset << std::setw(16) << r.mode;
        for (const auto& h : r.horizons) os << std::right << std::setw(10) << h.mad;
        for (const auto& h : r.horizons) os << std::right << std::setw(10) << h.fad;
        os << '\n';
    }
    return os.str();
}

// Per-sample world trajectories: "sample step pred_x pred_y true_x true_y".
inline std::string format_trajectory_dump(const PredictionSet& set, std::span<const Example> examples) {
    std::string out = "# sample scene ped t_last step pred_x pred_y true_x true_y\n";
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t k = 0; k < set.pred[i].size(); ++k) {
            const auto& s = examples[i].sample;
            out += std::to_string(i) + " " + s.scene_id + " " + std::to_string(s.ped_id) + " " +
                   std::to_string(s.t_last) + " " + std::to_string(k + 1) + " " + settings::real(set.pred[i][k].x) +
                   " " + settings::real(set.pred[i][k].y) + " " + settings::real(set.truth[i][k].x) + " " +
                   settings::real(set.truth[i][k].y) + "\n";
        }
    return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out

struct NamedDataset {
    std::string name;
    std::vector<Example> examples;
};

struct FoldRecord {
    std::string test;
    std::vector<std::string> train;
};

struct LooResult {
    std::vector<MetricReport> reports;  // sorted by dataset name
    MetricReport average;               // dataset "avg"
    std::vector<FoldRecord> folds;
};

// Trains on `train` (already sorted by name) and returns the report for `test`.
using FoldRunner = std::function<MetricReport(const std::vector<const NamedDataset*>& train, const NamedDataset& test)>;

// Arithmetic mean of per-dataset metrics, horizon by horizon.
inline MetricReport average_report(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ContractError("average of zero reports");
    MetricReport avg{"avg", reports.front().mode, 0, reports.front().horizons};
    for (auto& h : avg.horizons) h.mad = h.fad = 0.0;
    for (const auto& r : reports) {
        if (r.horizons.size() != avg.horizons.size()) throw ContractError("reports disagree on horizons");
        avg.samples += r.samples;
        for (std::size_t k = 0; k < r.horizons.size(); ++k) {
            avg.horizons[k].mad += r.horizons[k].mad;
            avg.horizons[k].fad += r.horizons[k].fad;
        }
    }
    for (auto& h : avg.horizons) {
        h.mad /= static_cast<double>(reports.size());
        h.fad /= static_cast<double>(reports.size());
    }
    return avg;
}

inline LooResult leave_one_out(const std::vector<NamedDataset>& datasets, const FoldRunner& run_fold) {
    if (datasets.size() < 2) throw ContractError("leave-one-out needs at least 2 datasets");
    std::vector<const NamedDataset*> sorted;
    for (const auto& d : datasets) sorted.push_back(&d);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->name == sorted[i - 1]->name) throw ContractError("duplicate dataset name " + sorted[i]->name);

    LooResult result;
    for (const auto* test : sorted) {
        std::vector<const NamedDataset*> train;
        FoldRecord fold{test->name, {}};
        for (const auto* d : sorted)
            if (d != test) {
                train.push_back(d);
                fold.train.push_back(d->name);
            }
        MetricReport r = run_fold(train, *test);
        r.dataset = test->name;
        result.reports.push_back(std::move(r));
        result.folds.push_back(std::move(fold));
    }
    result.average = average_report(result.reports);
    return result;
}

// Sample identity: (scene, pedestrian, last observed frame).
inline std::set<std::tuple<std::string, PedId, FrameId>> sample_keys(std::span<const Example> examples) {
    std::set<std::tuple<std::string, PedId, FrameId>> keys;
    for (const auto& e : examples) keys.emplace(e.sample.scene_id, e.sample.ped_id, e.sample.t_last);
    return keys;
}

// ---------------------------------------------------------------------------
// Component ablation

struct AblationVariant {
    std::string name;
    bool edge = true;
    bool cvae = true;
};

inline std::vector<AblationVariant> default_ablation_variants() {
    return {{"bare", false, false}, {"no-cvae", true, false}, {"no-edge", false, true}, {"full", true, true}};
}

struct AblationRow {
    AblationVariant variant;
    std::size_t parameters = 0;
    std::vector<EpochLog> log;
    MetricReport deterministic;
    std::optional<MetricReport> best_of;  // CVAE variants only
};

struct AblationOptions {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t model_seed = 1;
    std::vector<double> horizons;
    double dt = 0.4;
    std::size_t best_of = 20;
    std::uint64_t eval_seed = 7;
};

// Trains every variant from the same seed and configuration; only the
// edge input and the latent path are toggled.
inline std::vector<AblationRow> ablation_run(std::span<const Example> train_set, std::span<const Example> test_set,
                                             const AblationOptions& opt,
                                             const std::vector<AblationVariant>& variants = default_ablation_variants()) {
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        ModelConfig c = opt.model;
        c.use_edge = v.edge;
        c.use_latent = v.cvae;
        SitModel model(c, opt.model_seed);
        AblationRow row{v, model.params().numel(), {}, {}, std::nullopt};
        row.log = train(model, train_set, opt.train);
        row.deterministic = horizon_slice(predict_deterministic(model, test_set), opt.horizons, opt.dt, v.name,
                                          "deterministic");
        if (v.cvae && opt.best_of > 0) {
            row.best_of = best_of_n(model, test_set, opt.best_of, opt.eval_seed, opt.dt, opt.horizons,
                                    BestOfSelect::by_mad, v.name);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Component check marks, then MAD and FAD per horizon. CVAE rows report the
// best-of-N numbers when available.
inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    if (rows.empty()) return {};
    const auto& hs = rows.front().deterministic.horizons;
    os << std::left << std::setw(10) << "variant" << std::setw(3) << "E" << std::setw(3) << "C" << std::setw(16)
       << "mode";
    for (const auto& h : hs) os << std::right << std::setw(10) << ("MAD@" + horizon_label(h.seconds) + "s");
    for (const auto& h : hs) os << std::right << std::setw(10) << ("FAD@" + horizon_label(h.seconds) + "s");
    os << std::right << std::setw(10) << "params" << '\n';
    os << std::fixed << std::setprecision(3);
    for (const auto& r : rows) {
        const MetricReport& m = r.best_of ? *r.best_of : r.deterministic;
        os << std::left << std::setw(10) << r.variant.name << std::setw(3) << (r.variant.edge ? "x" : "-")
           << std::setw(3) << (r.variant.cvae ? "x" : "-") << std::setw(16) << m.mode;
        for (const auto& h : m.horizons) os << std::right << std::setw(10) << h.mad;
        for (const auto& h : m.horizons) os << std::right << std::setw(10) << h.fad;
        os << std::right << std::setw(10) << r.parameters << '\n';
    }
    os << "note: every variant allocates the same parameters; no-edge feeds zeros to the edge encoder and "
          "no-cvae decodes with a zero latent and no KL term\n";
    return os.str();
}

}  // namespace sit
