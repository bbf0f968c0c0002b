#pragma once

// Command-line front end: train, evaluate, loo, synth, gradcheck.
// Every failure is reported as one line "error[<kind>]: <message>" on the
// error stream with a nonzero exit status.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sit/config.hpp"
#include "sit/gradcheck_suite.hpp"
#include "sit/synth.hpp"

namespace sit::cli {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("no such file", path.string());
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read", path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write", path.string());
    os << text;
    if (!os) throw IoError("failed writing", path.string());
}

// One trajectory file -> windows of one scene, named after the file stem.
inline std::vector<Example> load_examples(const fs::path& path, const DatasetProfile& profile,
                                          const std::string& scene_id = {}) {
    const std::string text = read_text(path);
    try {
        const Scene scene = parse_trajectory_file(text, profile.dt, scene_id.empty() ? path.stem().string() : scene_id);
        return prepare_examples(scene, profile);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

inline std::vector<Example> load_examples(const std::vector<fs::path>& paths, const DatasetProfile& profile) {
    std::vector<Example> out;
    for (const auto& p : paths) {
        auto ex = load_examples(p, profile);
        out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
    }
    return out;
}

inline std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

// A dataset is a trajectory file (named by its stem) or a directory of
// trajectory files (named by the directory).
inline NamedDataset load_named_dataset(const fs::path& path, const DatasetProfile& profile) {
    if (fs::is_directory(path)) {
        NamedDataset d{path.filename().string(), {}};
        for (const auto& f : sorted_files(path)) {
            auto ex = load_examples(f, profile, d.name + "/" + f.stem().string());
            d.examples.insert(d.examples.end(), std::make_move_iterator(ex.begin()),
                              std::make_move_iterator(ex.end()));
        }
        return d;
    }
    return {path.stem().string(), load_examples(path, profile)};
}

// Keys whose values differ between two settings lists, "key: a vs b".
inline std::vector<std::string> setting_differences(const KeyValues& expected, const KeyValues& actual) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < expected.size() && i < actual.size(); ++i)
        if (expected[i].second != actual[i].second) {
            out.push_back(expected[i].first + " " + expected[i].second + " (config) vs " + actual[i].second +
                          " (checkpoint)");
        }
    return out;
}

inline std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

inline std::string config_dump(const RunConfig& c) {
    std::string out = "data.profile = " + c.profile_name + "\n";
    for (const auto& [k, v] : profile_settings(c.profile)) out += k + " = " + v + "\n";
    for (const auto& [k, v] : model_settings(c.model)) out += k + " = " + v + "\n";
    out += "train.batch_size = " + std::to_string(c.train.batch_size) + "\n";
    out += "train.epochs = " + std::to_string(c.train.epochs) + "\n";
    out += "train.lr0 = " + settings::real(c.train.lr0) + "\n";
    out += "train.decay_rate = " + settings::real(c.train.decay_rate) + "\n";
    out += "train.augment = " + settings::flag(c.train.augment) + "\n";
    out += "train.checkpoint_interval = " + std::to_string(c.train.checkpoint_interval) + "\n";
    out += "run.seed = " + std::to_string(c.seed) + "\n";
    return out;
}

// Flag values shared by several commands; unset flags leave the config alone.
struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> epochs;
    std::optional<std::string> mode;
    std::optional<std::size_t> n;
    std::optional<std::string> horizons;
    std::vector<std::string> datasets;
};

inline RunConfig resolve_config(const CommonFlags& f, RunConfig base = {}) {
    RunConfig c = f.config.empty() ? std::move(base) : load_run_config(f.config, std::move(base));
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.out = *f.out;
    if (f.epochs) c.train.epochs = *f.epochs;
    if (f.mode) c.eval.mode = settings::parse_mode("--mode", *f.mode);
    if (f.n) c.eval.n = *f.n;
    if (f.horizons) c.eval.horizons = settings::parse_horizons("--horizons", *f.horizons);
    c.train.seed = c.seed;
    return c;
}

inline std::vector<MetricReport> evaluate_reports(const SitModel& model, std::span<const Example> test,
                                                  const RunConfig& c, const std::string& name,
                                                  PredictionSet* dump) {
    const double dt = c.profile.dt;
    std::vector<MetricReport> reports;
    reports.push_back(horizon_slice(constant_velocity_predictions(test, dt), c.eval.horizons, dt, name, "cv"));
    if (c.eval.mode == InferMode::deterministic) {
        PredictionSet set = predict_deterministic(model, test);
        reports.push_back(horizon_slice(set, c.eval.horizons, dt, name, "deterministic"));
        if (dump) *dump = std::move(set);
    } else {
        const StochasticDraws draws = predict_stochastic(model, test, c.eval.n, c.seed);
        reports.push_back(best_of_n_report(draws, c.eval.n, c.eval.horizons, dt, c.eval.select, name));
        if (dump) {
            // Dump the draw with the lowest full-window MAD.
            dump->pred.clear();
            dump->truth = draws.truth;
            for (std::size_t i = 0; i < draws.draws.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < draws.draws[i].size(); ++k)
                    if (mad(draws.draws[i][k], draws.truth[i]) < mad(draws.draws[i][best], draws.truth[i])) best = k;
                dump->pred.push_back(draws.draws[i][best]);
            }
        }
    }
    return reports;
}

inline int cmd_train(const CommonFlags& f, std::ostream& out) {
    RunConfig c = resolve_config(f);
    for (const auto& d : f.datasets) c.train_paths.emplace_back(d);
    c.validate();
    if (c.train_paths.empty()) throw ConfigError("no training data: set paths.train or pass dataset files");
    const auto examples = load_examples(c.train_paths, c.profile);
    if (examples.empty()) throw DataError("training files contain no complete observation+prediction window");
    c.train.checkpoint_dir = c.out;
    SitModel model(c.resolved_model(), c.seed);
    out << "training on " << examples.size() << " samples, " << model.params().numel() << " parameters\n";
    const auto log = train(model, examples, c.train, c.profile, [&](const EpochLog& e) {
        out << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.total << " mse " << e.mse << " kl " << e.kl
            << "\n";
    });
    write_text(c.out / "loss_log.csv", format_loss_log(log));
    write_text(c.out / "run_config.txt", config_dump(c));
    out << "wrote " << (c.out / "checkpoint.txt").string() << "\n";
    return 0;
}

inline int cmd_evaluate(const CommonFlags& f, const std::string& checkpoint_path, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    RunConfig base;
    base.profile = ckpt.profile;
    base.profile_name = "checkpoint";
    base.model = ckpt.config;
    RunConfig c = resolve_config(f, base);
    for (const auto& d : f.datasets) c.test_paths.emplace_back(d);
    c.validate();
    auto diffs = setting_differences(model_settings(c.resolved_model()), model_settings(ckpt.config));
    for (auto& d : setting_differences(profile_settings(c.profile), profile_settings(ckpt.profile))) diffs.push_back(d);
    if (!diffs.empty()) throw DataError("config does not match checkpoint: " + join(diffs, "; "));
    if (c.test_paths.empty()) throw ConfigError("no test data: set paths.test or pass dataset files");

    std::vector<MetricReport> reports;
    std::string dumps;
    for (const auto& p : c.test_paths) {
        const NamedDataset d = load_named_dataset(p, c.profile);
        if (d.examples.empty()) throw DataError("no complete window in " + p.string());
        PredictionSet set;
        for (auto& r : evaluate_reports(ckpt.model, d.examples, c, d.name, &set)) reports.push_back(std::move(r));
        dumps += format_trajectory_dump(set, d.examples);
    }
    write_text(c.out / "report.csv", format_report_csv(reports));
    write_text(c.out / "report.txt", format_report_table(reports));
    write_text(c.out / "trajectories.txt", dumps);
    out << format_report_table(reports);
    return 0;
}

inline int cmd_loo(const CommonFlags& f, std::ostream& out) {
    RunConfig c = resolve_config(f);
    c.validate();
    std::vector<fs::path> inputs;
    for (const auto& d : f.datasets) {
        if (!fs::exists(d)) throw IoError("no such file or directory", d);
        if (f.datasets.size() == 1 && fs::is_directory(d)) {
            for (const auto& e : fs::directory_iterator(d)) inputs.push_back(e.path());
        } else {
            inputs.emplace_back(d);
        }
    }
    std::sort(inputs.begin(), inputs.end());
    std::vector<NamedDataset> datasets;
    for (const auto& p : inputs) datasets.push_back(load_named_dataset(p, c.profile));
    if (datasets.size() < 2) throw ContractError("leave-one-out needs at least 2 datasets, found " +
                                                 std::to_string(datasets.size()));

    const auto runner = [&](const std::vector<const NamedDataset*>& train_sets, const NamedDataset& test) {
        std::vector<Example> train_examples;
        for (const auto* d : train_sets)
            train_examples.insert(train_examples.end(), d->examples.begin(), d->examples.end());
        const auto train_keys = sample_keys(train_examples);
        for (const auto& k : sample_keys(test.examples))
            if (train_keys.count(k)) throw DataError("test sample of " + test.name + " also appears in training");
        if (train_examples.empty() || test.examples.empty()) throw DataError("fold " + test.name + " has no samples");
        SitModel model(c.resolved_model(), c.seed);
        out << "fold " << test.name << ": train " << train_examples.size() << ", test " << test.examples.size()
            << "\n";
        const auto log = train(model, train_examples, c.train, c.profile);
        write_text(c.out / (test.name + "_loss_log.csv"), format_loss_log(log));
        PredictionSet set;
        auto reports = evaluate_reports(model, test.examples, c, test.name, &set);
        write_text(c.out / (test.name + "_report.csv"), format_report_csv(reports));
        write_text(c.out / (test.name + "_trajectories.txt"), format_trajectory_dump(set, test.examples));
        return reports.back();
    };
    const LooResult result = leave_one_out(datasets, runner);
    std::vector<MetricReport> table = result.reports;
    table.push_back(result.average);
    write_text(c.out / "loo_report.csv", format_report_csv(table));
    write_text(c.out / "loo_report.txt", format_report_table(table));
    out << format_report_table(table);
    return 0;
}

inline int cmd_synth(const SynthConfig& s, const std::string& out_path, std::ostream& out) {
    const Scene scene = synthesize(s, fs::path(out_path).stem().string());
    write_text(out_path, format_trajectory_file(scene));
    out << "wrote " << scene.size() << " records (" << scene.tracks().size() << " agents) to " << out_path << "\n";
    return 0;
}

inline int cmd_gradcheck(const GradCheckSuiteOptions& opt, std::ostream& out) {
    bool ok = true;
    for (const auto& c : run_gradcheck_suite(opt)) {
        ok = ok && c.result.ok();
        out << (c.result.ok() ? "ok   " : "FAIL ") << c.name << "  coords " << c.result.checked << "  max_rel "
            << c.result.max_rel_error << "  max_abs " << c.result.max_abs_error;
        if (!c.result.ok()) out << "  worst " << c.result.worst;
        out << "\n";
    }
    if (!ok) throw NumericError("finite-difference check failed");
    return 0;
}

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Social-interaction trajectory transformer"};
    app.require_subcommand(1);
    CommonFlags flags;

    const auto add_common = [&](CLI::App* cmd, bool training, bool evaluation) {
        cmd->add_option("--config", flags.config, "section.key = value configuration file");
        cmd->add_option("--seed", flags.seed, "seed for every random stream");
        cmd->add_option("--out", flags.out, "output directory");
        if (training) cmd->add_option("--epochs", flags.epochs, "override train.epochs");
        if (evaluation) {
            cmd->add_option("--mode", flags.mode, "deterministic | stochastic");
            cmd->add_option("--n", flags.n, "stochastic draws per sample (best-of-n)");
            cmd->add_option("--horizons", flags.horizons, "comma-separated horizons in seconds");
        }
    };

    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint and loss log");
    add_common(train_cmd, true, false);
    train_cmd->add_option("datasets", flags.datasets, "training trajectory files");

    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on test files");
    add_common(eval_cmd, false, true);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("datasets", flags.datasets, "test trajectory files");

    auto* loo_cmd = app.add_subcommand("loo", "leave-one-out over a directory of datasets");
    add_common(loo_cmd, true, true);
    loo_cmd->add_option("datasets", flags.datasets, "dataset directory, or >= 2 dataset files/directories")
        ->required();

    SynthConfig synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic trajectory file");
    synth_cmd->add_option("scenario", synth.scenario, join(synth_scenarios(), " | "))->required();
    synth_cmd->add_option("--out", synth_out, "output file")->required();
    synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--agents", synth.agents);
    synth_cmd->add_option("--frames", synth.frames);
    synth_cmd->add_option("--noise", synth.noise, "position noise std-dev (m)");
    synth_cmd->add_option("--dt", synth.dt);
    synth_cmd->add_option("--turn-frame", synth.turn_frame);
    synth_cmd->add_option("--turn-degrees", synth.turn_degrees);

    GradCheckSuiteOptions gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and the full model");
    gc_cmd->add_option("--seed", gc.seed);
    gc_cmd->add_option("--coords", gc.model_coords, "model parameter coordinates to probe (0: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error[usage]: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(flags, out);
        if (*eval_cmd) return cmd_evaluate(flags, checkpoint, out);
        if (*loo_cmd) return cmd_loo(flags, out);
        if (*synth_cmd) return cmd_synth(synth, synth_out, out);
        return cmd_gradcheck(gc, out);
    } catch (const Error& e) {
        err << "error[" << e.kind() << "]: " << one_line(e.what()) << "\n";
    } catch (const fs::filesystem_error& e) {
        err << "error[io]: " << one_line(e.what()) << "\n";
    } catch (const std::exception& e) {
        err << "error[internal]: " << one_line(e.what()) << "\n";
    }
    return 1;
}

}  // namespace sit::cli
