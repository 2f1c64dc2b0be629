#include "cli.hpp"

#include "selftest.hpp"

#include "deepoformer/dataset.hpp"
#include "deepoformer/errors.hpp"
#include "deepoformer/evaluation.hpp"
#include "deepoformer/features.hpp"
#include "deepoformer/model.hpp"
#include "deepoformer/synthgen.hpp"
#include "deepoformer/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace deepoformer::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kConfigEcho = "resolved_config.ini";

struct SynthArgs {
    std::size_t curves = 54;
    std::uint64_t seed = 1;
    double noise = 0.15;
    std::string out;
};

struct FeaturizeArgs {
    std::string data;
    std::string out;
    bool check = false;
    double tolerance = 1e-6;
    std::string log_base = "10";
};

struct SplitArgs {
    std::string data;
    std::size_t n_test = 7;
    std::uint64_t seed = 0;
    std::vector<int> test_ids;
    std::string out;
};

// Dataset + split selection shared by train and evaluate.
struct DataArgs {
    std::string data;
    std::string split;
    std::size_t n_test = 7;
    std::uint64_t split_seed = 0;
};

struct ModelArgs {
    std::string variant = "full";
    std::size_t p = 16;
    std::size_t blocks = 2;
    std::size_t heads = 3;
    std::size_t head_dim = 48;
    std::size_t model_dim = 48;
    double attention_dropout = 0.2;
    double ffn_dropout = 0.1;
    std::size_t hidden = 64;
    std::string continuous_norm = "affine";
    std::string log_base = "10";
};

struct TrainArgs {
    DataArgs data;
    ModelArgs model;
    std::size_t reps = 10;
    std::uint64_t seed = 0;
    std::size_t epochs = 3000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::size_t log_every = 100;
    std::size_t patience = 0;
    bool no_shuffle = false;
    std::size_t workers = 1;
    std::size_t grid_points = kDenseGridPoints;
    bool verbose = false;
    std::string out;
};

struct EvaluateArgs {
    DataArgs data;
    std::vector<std::string> checkpoints;
    std::size_t grid_points = kDenseGridPoints;
    std::string out;
};

struct PredictArgs {
    std::vector<std::string> checkpoints;
    std::string data;
    int curve_id = 0;
    std::vector<double> grid;
    std::size_t grid_points = kDenseGridPoints;
    std::string out;
};

struct ReportArgs {
    std::vector<std::string> runs;
    std::string out;
};

struct SelftestArgs {
    std::size_t seeds = 5;
    std::uint64_t seed = 1;
    std::size_t entries = 48;
};

LogBase parse_log_base(const std::string& s) {
    if (s == "10") return LogBase::ten;
    if (s == "e") return LogBase::natural;
    throw ConfigError("log base must be 10 or e, got '" + s + "'");
}

std::vector<SNCurve> load_curves(const std::string& path, std::ostream& err) {
    DatasetLoadResult loaded = read_dataset(fs::path(path));
    for (const std::string& w : loaded.warnings) err << "warning: " << w << '\n';
    return std::move(loaded.curves);
}

CurveSplit resolve_split(const DataArgs& a, std::span<const SNCurve> curves) {
    if (a.split.empty()) return split_curves(curves, a.n_test, a.split_seed);
    const CurveSplit manifest = load_split(a.split);
    CurveSplit checked = split_curves(curves, manifest.test_curve_ids);
    checked.seed = manifest.seed;
    if (checked.train_curve_ids != manifest.train_curve_ids) {
        throw ValidationError("split manifest " + a.split + " does not match the dataset's curve ids");
    }
    return checked;
}

ModelDims make_dims(const ModelArgs& m) {
    ModelDims d;
    d.p = m.p;
    d.n_blocks = m.blocks;
    d.attention.n_heads = m.heads;
    d.attention.head_dim = m.head_dim;
    d.attention.model_dim = m.model_dim;
    d.attention.attention_dropout = m.attention_dropout;
    d.attention.ffn_dropout = m.ffn_dropout;
    d.branch_hidden = m.hidden;
    d.trunk_hidden = m.hidden;
    d.continuous_norm = parse_continuous_norm(m.continuous_norm);
    d.validate();
    return d;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

std::vector<fs::path> expand_checkpoints(const std::vector<std::string>& items) {
    std::vector<fs::path> out;
    for (const std::string& item : items) {
        const fs::path p(item);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(p);
        }
    }
    if (out.empty()) throw ConfigError("no checkpoints given");
    return out;
}

std::string checkpoint_name(std::uint64_t seed) { return "model_seed_" + std::to_string(seed) + ".json"; }

void add_data_options(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--data", a.data, "Dataset CSV")->required();
    cmd->add_option("--split", a.split, "Split manifest JSON (otherwise a seeded random split)");
    cmd->add_option("--n-test", a.n_test, "Test curves when drawing a split");
    cmd->add_option("--split-seed", a.split_seed, "Seed when drawing a split");
}

int run_synth(const SynthArgs& a, std::ostream& out) {
    FixtureOptions opts;
    opts.n_curves = a.curves;
    opts.noise_std = a.noise;
    if (a.curves == 0) throw ConfigError("--curves must be >= 1");
    const auto curves = default_fixture(a.seed, opts);
    write_dataset(fs::path(a.out), curves);
    out << "wrote " << curves.size() << " curves, " << record_count(curves) << " records to " << a.out << '\n';
    return kSuccess;
}

int run_featurize(const FeaturizeArgs& a, std::ostream& out, std::ostream& err) {
    const LogBase base = parse_log_base(a.log_base);
    const auto curves = load_curves(a.data, err);
    if (a.check) {
        const auto mismatches = check_stored_features(curves, a.tolerance, base);
        for (const FeatureMismatch& m : mismatches) {
            err << "row " << m.row << " (curve " << m.curve_id << "): " << m.column << " stored "
                << format_double(m.stored) << " recomputed " << format_double(m.recomputed) << '\n';
        }
        if (!mismatches.empty()) {
            throw ValidationError(std::to_string(mismatches.size()) + " stored feature value(s) differ from recomputed");
        }
    }
    const auto features = compute_feature_columns(curves, base);
    write_dataset(fs::path(a.out), curves, features);
    out << "wrote " << features.size() << " featurized records to " << a.out << '\n';
    return kSuccess;
}

int run_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
    const auto curves = load_curves(a.data, err);
    CurveSplit split;
    if (a.test_ids.empty()) {
        split = split_curves(curves, a.n_test, a.seed);
    } else {
        split = split_curves(curves, std::set<int>(a.test_ids.begin(), a.test_ids.end()));
        split.seed = a.seed;
    }
    save_split(split, a.out);
    out << "train " << split.train_curve_ids.size() << " curves (" << train_records(curves, split).size()
        << " records), test " << split.test_curve_ids.size() << " curves -> " << a.out << '\n';
    return kSuccess;
}

std::string loss_log(const TrainResult& trace, std::size_t log_every) {
    std::ostringstream s;
    s << "epoch,loss\n";
    for (std::size_t e = 1; e <= trace.epoch_loss.size(); ++e) {
        if (e % log_every == 0 || e == trace.epoch_loss.size()) s << e << ',' << format_double(trace.epoch_loss[e - 1]) << '\n';
    }
    return s.str();
}

int run_train(const TrainArgs& a, const std::string& echo, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    cfg.variant = parse_variant(a.model.variant);
    cfg.dims = make_dims(a.model);
    cfg.log_base = parse_log_base(a.model.log_base);
    cfg.dense_grid_points = a.grid_points;
    cfg.train.learning_rate = a.lr;
    cfg.train.batch_size = a.batch_size;
    cfg.train.epochs = a.epochs;
    cfg.train.shuffle = !a.no_shuffle;
    cfg.train.log_every = a.log_every;
    if (a.patience > 0) cfg.train.early_stopping_patience = a.patience;
    cfg.train.validate();
    RepetitionConfig reps{a.reps, a.seed, a.workers};
    reps.validate();

    const auto curves = load_curves(a.data.data, err);
    const CurveSplit split = resolve_split(a.data, curves);

    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_file(dir / kConfigEcho, echo);
    save_split(split, dir / "split.json");

    std::function<void(std::size_t, std::size_t, double)> progress;
    if (a.verbose) {
        progress = [&](std::size_t rep, std::size_t epoch, double loss) {
            err << "rep " << rep << " epoch " << epoch << " loss " << format_double(loss) << '\n';
        };
    }
    const auto started = std::chrono::steady_clock::now();
    RepetitionRun run = run_repetitions(curves, split, cfg, reps, progress);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    fs::create_directories(dir / "checkpoints");
    for (const Repetition& rep : run.repetitions) {
        write_file(dir / "logs" / ("loss_seed_" + std::to_string(rep.seed) + ".csv"), loss_log(rep.trace, a.log_every));
        if (rep.model) {
            save_checkpoint(dir / "checkpoints" / checkpoint_name(rep.seed), *rep.model, run.encoder);
        } else {
            err << "repetition " << rep.index << " (seed " << rep.seed << ") failed: " << rep.error << '\n';
        }
    }
    run.report.config_echo = echo;
    export_report(run.report, dir);

    const ReportSummary summary = summarize(run.report);
    out << format_report_table(std::span(&summary, 1));
    out << "band coverage " << format_double(run.report.band_coverage) << ", " << run.report.completed << '/'
        << run.report.seeds.size() << " repetitions in " << static_cast<long long>(seconds) << " s -> " << a.out
        << '\n';
    return run.report.all_completed() ? kSuccess : kRuntimeFailure;
}

int run_evaluate(const EvaluateArgs& a, const std::string& echo, std::ostream& out, std::ostream& err) {
    const auto curves = load_curves(a.data.data, err);
    const CurveSplit split = resolve_split(a.data, curves);
    const std::vector<SNCurve> test = test_curves(curves, split);
    if (test.empty()) throw ValidationError("split has no test curves");
    std::vector<std::vector<GridPoint>> grids;
    for (const SNCurve& c : test) grids.push_back(curve_grid(c, a.grid_points));

    std::vector<SeedOutcome> outcomes;
    std::string variant;
    const auto paths = expand_checkpoints(a.checkpoints);
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const ModelBundle bundle = load_checkpoint(paths[i]);
        const std::string v(to_string(bundle.model.variant()));
        if (variant.empty()) variant = v;
        if (v != variant) throw ConfigError("checkpoints mix variants " + variant + " and " + v);
        SeedOutcome o;
        o.index = i;
        o.seed = bundle.model.seed();
        o.evaluation = evaluate_seed(bundle.model, bundle.encoder, test, grids);
        outcomes.push_back(std::move(o));
    }
    RunReport report = aggregate(variant, test, grids, outcomes);
    report.config_echo = echo;
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_file(dir / kConfigEcho, echo);
    export_report(report, dir);
    const ReportSummary summary = summarize(report);
    out << format_report_table(std::span(&summary, 1));
    return kSuccess;
}

int run_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
    const auto curves = load_curves(a.data, err);
    const auto it = std::find_if(curves.begin(), curves.end(), [&](const SNCurve& c) { return c.curve_id == a.curve_id; });
    if (it == curves.end()) throw ValidationError("curve " + std::to_string(a.curve_id) + " not found in " + a.data);

    std::vector<GridPoint> grid;
    if (a.grid.empty()) {
        grid = curve_grid(*it, a.grid_points);
    } else {
        for (double s : a.grid) {
            std::optional<double> truth;
            for (const FatigueRecord& r : it->records)
                if (r.sigma_a == s) truth = r.log_n;
            grid.push_back({s, truth});
        }
    }
    std::vector<double> sigmas;
    for (const GridPoint& g : grid) sigmas.push_back(g.sigma_a);

    std::vector<std::vector<double>> per_model;
    std::vector<double> kept;
    for (const fs::path& p : expand_checkpoints(a.checkpoints)) {
        const ModelBundle bundle = load_checkpoint(p);
        const CurvePrediction pred = predict_curve(bundle.model, bundle.encoder, it->records.front(), sigmas);
        if (per_model.empty()) {
            for (double s : pred.skipped) err << "warning: sigma_a " << format_double(s) << " outside the feature domain, skipped\n";
            for (const CurvePoint& c : pred.points) kept.push_back(c.sigma_a);
        }
        std::vector<double> values;
        for (const CurvePoint& c : pred.points) values.push_back(c.log_n);
        per_model.push_back(std::move(values));
    }

    std::ostringstream csv;
    csv << "sigma_a,mean_logN,lo,hi,true_logN\n";
    std::size_t k = 0;
    for (const GridPoint& g : grid) {
        if (k >= kept.size() || kept[k] != g.sigma_a) continue;
        std::vector<double> column;
        for (const auto& m : per_model) column.push_back(m[k]);
        const MeanStd ms = mean_std(column);
        csv << format_double(g.sigma_a) << ',' << format_double(ms.mean) << ',' << format_double(ms.mean - 2 * ms.stddev)
            << ',' << format_double(ms.mean + 2 * ms.stddev) << ',' << (g.true_log_n ? format_double(*g.true_log_n) : "")
            << '\n';
        ++k;
    }
    if (a.out.empty() || a.out == "-") {
        out << csv.str();
    } else {
        write_file(a.out, csv.str());
        out << "wrote " << kept.size() << " points to " << a.out << '\n';
    }
    return kSuccess;
}

int run_report(const ReportArgs& a, std::ostream& out) {
    std::vector<fs::path> summaries;
    for (const std::string& r : a.runs) {
        const fs::path p(r);
        if (fs::is_regular_file(p)) {
            summaries.push_back(p);
        } else if (fs::is_regular_file(p / "summary.json")) {
            summaries.push_back(p / "summary.json");
        } else if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_directory() && fs::is_regular_file(e.path() / "summary.json")) found.push_back(e.path() / "summary.json");
            std::sort(found.begin(), found.end());
            summaries.insert(summaries.end(), found.begin(), found.end());
        } else {
            throw ConfigError("no run found at " + r);
        }
    }
    if (summaries.empty()) throw ConfigError("no summary.json found under the given runs");
    std::vector<ReportSummary> rows;
    for (const fs::path& p : summaries) rows.push_back(load_summary(p));
    const std::string table = format_report_table(rows);
    out << table;
    if (!a.out.empty()) write_file(a.out, table);
    return kSuccess;
}

int run_selftest(const SelftestArgs& a, std::ostream& out) {
    selftest::Options opts;
    opts.seeds = a.seeds;
    opts.base_seed = a.seed;
    opts.model_entries_per_tensor = a.entries;
    const auto started = std::chrono::steady_clock::now();
    std::size_t failed = 0;
    for (const selftest::Check& c : selftest::run_all(opts)) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        if (!c.passed) ++failed;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out << (failed == 0 ? "selftest passed" : "selftest FAILED (" + std::to_string(failed) + " checks)") << " in "
        << format_double(std::round(seconds * 10) / 10) << " s\n";
    return failed == 0 ? kSuccess : kRuntimeFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Operator-learning models for fatigue S-N curves", "deepoformer"};
    app.config_formatter(std::make_shared<CLI::ConfigINI>());
    app.set_config("--config", "", "INI file with one [section] per subcommand; command-line flags take precedence");
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic S-N dataset");
    c_synth->add_option("--curves", synth.curves, "Number of curves");
    c_synth->add_option("--seed", synth.seed, "Generator seed");
    c_synth->add_option("--noise", synth.noise, "Std of the log10 life noise")->check(CLI::NonNegativeNumber);
    c_synth->add_option("--out", synth.out, "Output CSV")->required();

    FeaturizeArgs feat;
    auto* c_feat = app.add_subcommand("featurize", "Recompute sigma_a3/Stussi/Weibull/PM columns");
    c_feat->add_option("--data", feat.data, "Input CSV")->required();
    c_feat->add_option("--out", feat.out, "Output CSV")->required();
    c_feat->add_flag("--check-features", feat.check, "Fail when stored feature values differ from recomputed ones");
    c_feat->add_option("--tolerance", feat.tolerance, "Relative tolerance of --check-features");
    c_feat->add_option("--log-base", feat.log_base, "Logarithm of the domain features (10 or e)");

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Write a curve-level train/test split manifest");
    c_split->add_option("--data", split.data, "Dataset CSV")->required();
    c_split->add_option("--n-test", split.n_test, "Number of test curves");
    c_split->add_option("--seed", split.seed, "Split seed");
    c_split->add_option("--test-ids", split.test_ids, "Explicit test curve ids")->delimiter(',');
    c_split->add_option("--out", split.out, "Manifest JSON")->required();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train seeded repetitions and write checkpoints, logs and metrics");
    add_data_options(c_train, train.data);
    c_train->add_option("--variant", train.model.variant,
                        "full | mse_loss | no_domain_features | mlp_branch | direct_regressor");
    c_train->add_option("--reps", train.reps, "Repetitions");
    c_train->add_option("--seed", train.seed, "Base seed; repetition i uses seed + i");
    c_train->add_option("--epochs", train.epochs, "Training epochs");
    c_train->add_option("--batch-size", train.batch_size, "Mini-batch size");
    c_train->add_option("--lr", train.lr, "Adam learning rate");
    c_train->add_option("--log-every", train.log_every, "Loss log interval in epochs");
    c_train->add_option("--patience", train.patience, "Early stopping patience in epochs (0 = off)");
    c_train->add_flag("--no-shuffle", train.no_shuffle, "Keep record order fixed");
    c_train->add_option("--workers", train.workers, "Repetitions trained in parallel");
    c_train->add_option("--p", train.model.p, "Branch/trunk embedding width");
    c_train->add_option("--blocks", train.model.blocks, "Transformer blocks");
    c_train->add_option("--heads", train.model.heads, "Attention heads");
    c_train->add_option("--head-dim", train.model.head_dim, "Width of each attention head");
    c_train->add_option("--model-dim", train.model.model_dim, "Token embedding width");
    c_train->add_option("--attention-dropout", train.model.attention_dropout, "Dropout on attention weights");
    c_train->add_option("--ffn-dropout", train.model.ffn_dropout, "Dropout inside the feed-forward sublayer");
    c_train->add_option("--hidden", train.model.hidden, "Hidden width of the branch head and trunk MLPs");
    c_train->add_option("--continuous-norm", train.model.continuous_norm, "affine | layer");
    c_train->add_option("--log-base", train.model.log_base, "Logarithm of the domain features (10 or e)");
    c_train->add_option("--grid-points", train.grid_points, "Dense points per exported test curve");
    c_train->add_flag("--verbose", train.verbose, "Print the loss of every logged epoch");
    c_train->add_option("--out", train.out, "Output directory")->required();

    EvaluateArgs eval;
    auto* c_eval = app.add_subcommand("evaluate", "Evaluate saved checkpoints on the test curves");
    add_data_options(c_eval, eval.data);
    c_eval->add_option("--checkpoints", eval.checkpoints, "Checkpoint files or directories")->required();
    c_eval->add_option("--grid-points", eval.grid_points, "Dense points per exported test curve");
    c_eval->add_option("--out", eval.out, "Output directory")->required();

    PredictArgs predict;
    auto* c_pred = app.add_subcommand("predict-curve", "Predict one curve's S-N line");
    c_pred->add_option("--checkpoints", predict.checkpoints, "Checkpoint files or directories")->required();
    c_pred->add_option("--data", predict.data, "Dataset CSV holding the curve")->required();
    c_pred->add_option("--curve-id", predict.curve_id, "Curve to predict")->required();
    c_pred->add_option("--grid", predict.grid, "Explicit sigma_a values")->delimiter(',');
    c_pred->add_option("--grid-points", predict.grid_points, "Dense points when no --grid is given");
    c_pred->add_option("--out", predict.out, "Output CSV (default: standard output)");

    ReportArgs report;
    auto* c_report = app.add_subcommand("report", "Compare variants from earlier train/evaluate runs");
    c_report->add_option("--runs", report.runs, "Run directories, summary files, or a parent directory")->required();
    c_report->add_option("--out", report.out, "Also write the table to this file");

    SelftestArgs self;
    auto* c_self = app.add_subcommand("selftest", "Gradient checks and metric oracles");
    c_self->add_option("--seeds", self.seeds, "Seeds per gradient check");
    c_self->add_option("--seed", self.seed, "First seed");
    c_self->add_option("--entries", self.entries, "Entries checked per parameter tensor of whole models (0 = all)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        const std::string echo = app.config_to_str(true, false);
        if (*c_synth) return run_synth(synth, out);
        if (*c_feat) return run_featurize(feat, out, err);
        if (*c_split) return run_split(split, out, err);
        if (*c_train) return run_train(train, echo, out, err);
        if (*c_eval) return run_evaluate(eval, echo, out, err);
        if (*c_pred) return run_predict(predict, out, err);
        if (*c_report) return run_report(report, out);
        if (*c_self) return run_selftest(self, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return is_input_error(e) ? kInputError : kRuntimeFailure;
    }
    return kInputError;
}

}  // namespace deepoformer::cli
