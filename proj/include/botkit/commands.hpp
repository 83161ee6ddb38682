#pragma once

// Command layer behind the botkit binary. Each cmd_* function takes a fully
// resolved option struct (flag/config/default precedence is the entry point's
// job), writes artifacts, prints human-readable progress to the given stream
// and returns a process exit code:
//
//   0  success
//   1  configuration error
//   2  data precondition violated
//   3  missing artifact
//   4  verification failure
//
// Artifacts never embed timestamps, so repeated runs with identical inputs
// produce byte-identical outputs; wall-clock notes go to a run.log sidecar.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "botkit/ensemble.hpp"
#include "botkit/pipeline.hpp"
#include "botkit/verify.hpp"

namespace botkit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitMissing = 3;
inline constexpr int kExitVerify = 4;

struct CliError : std::runtime_error {
    int code;
    CliError(int exit_code, const std::string& msg) : std::runtime_error(msg), code(exit_code) {}
};

namespace cli_detail {

// Training and inference run in single precision; double stays reserved for
// the finite-difference suites.
using Real = float;

inline void require_file(const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::exists(p)) throw CliError(kExitMissing, "missing " + what + ": " + p.string());
}

// Re-tags loader/validator exceptions as data errors so main() can map them.
template <class Fn>
auto as_data_error(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError(kExitData, e.what());
    }
}

inline std::filesystem::path resolve_against(const std::filesystem::path& base, const std::string& maybe_relative) {
    std::filesystem::path p(maybe_relative);
    return p.is_absolute() ? p : base / p;
}

inline std::string zero_pad(std::size_t value, int width) {
    std::ostringstream os;
    os << std::setw(width) << std::setfill('0') << value;
    return os.str();
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline void append_run_log(const std::filesystem::path& dir, const std::string& message) {
    std::filesystem::create_directories(dir);
    std::ofstream log(dir / "run.log", std::ios::app);
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    log << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << message << "\n";
}

// Loads every scan named by a slices manifest, resolving relative paths
// against the manifest's directory.
inline std::vector<ScanSlices> load_scan_set(const std::string& manifest_path) {
    require_file(manifest_path, "slices manifest");
    Manifest m = as_data_error([&] { return load_manifest(manifest_path); });
    std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    std::vector<ScanSlices> scans;
    scans.reserve(m.rows.size());
    for (const auto& row : m.rows) {
        std::filesystem::path p = resolve_against(base, row.path);
        require_file(p, "slices file");
        ScanSlices s = as_data_error([&] { return load_slices(p.string()); });
        if (s.subject_id != row.subject_id || s.scan_id != row.scan_id || s.label != row.label)
            throw CliError(kExitData, p.string() + ": embedded identity disagrees with the manifest row for " +
                                          row.subject_id + "/" + row.scan_id);
        scans.push_back(std::move(s));
    }
    return scans;
}

}  // namespace cli_detail

// --------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string out_dir;
    TaskKind task = TaskKind::ad_vs_cn;
    std::size_t subjects_per_class = 40;
    std::size_t scans_per_subject = 1;
    std::size_t extent = 64;
    std::uint64_t seed = 2024;
    bool null_signal = false;  // both classes drawn from the same profile
};

inline int cmd_synth(const SynthOptions& opt, std::ostream& os) {
    namespace fs = std::filesystem;
    if (opt.subjects_per_class < 5)
        throw CliError(kExitData, "cannot stratify: need at least 5 subjects per class, got " +
                                      std::to_string(opt.subjects_per_class));
    if (opt.scans_per_subject == 0) throw CliError(kExitConfig, "scans per subject must be positive");
    if (opt.extent < 10) throw CliError(kExitConfig, "volume extent must be at least 10");

    auto [neg, pos] = task_classes(opt.task);
    auto [neg_profile, pos_profile] = synthetic_profiles(opt.null_signal);
    fs::path out(opt.out_dir);
    fs::create_directories(out / "volumes");

    Manifest manifest;
    for (int cls = 0; cls < 2; ++cls) {
        Diagnosis diag = cls ? pos : neg;
        const ClassProfile& profile = cls ? pos_profile : neg_profile;
        std::string prefix = cli_detail::lower(diagnosis_name(diag));
        for (std::size_t i = 0; i < opt.subjects_per_class; ++i) {
            std::string subject = prefix + cli_detail::zero_pad(i, 3);
            for (std::size_t j = 0; j < opt.scans_per_subject; ++j) {
                std::string scan = "s" + std::to_string(j);
                Volume v = generate_synthetic_volume(profile, subject, scan, diag, opt.seed, opt.extent);
                std::string rel = "volumes/" + subject + "_" + scan + ".vol";
                save_volume(v, (out / rel).string());
                manifest.rows.push_back(ManifestRow{subject, scan, diag, rel});
            }
        }
    }
    save_manifest(manifest, (out / "manifest.csv").string());
    os << "synth: wrote " << manifest.rows.size() << " volumes (" << opt.extent << "^3, "
       << (opt.null_signal ? "null signal" : "separable classes") << ") under " << out.string() << "\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
    std::string manifest_path;
    std::string out_dir;
    std::size_t target_size = 224;
    int slices_per_scan = 10;
};

inline int cmd_preprocess(const PreprocessOptions& opt, std::ostream& os) {
    namespace fs = std::filesystem;
    if (opt.target_size == 0) throw CliError(kExitConfig, "target size must be positive");
    if (opt.slices_per_scan <= 0) throw CliError(kExitConfig, "slice count must be positive");
    cli_detail::require_file(opt.manifest_path, "volume manifest");

    Manifest manifest = cli_detail::as_data_error([&] { return load_manifest(opt.manifest_path); });
    fs::path base = fs::path(opt.manifest_path).parent_path();
    fs::path out(opt.out_dir);
    fs::create_directories(out);

    Manifest slices_manifest;
    for (const auto& row : manifest.rows) {
        fs::path volume_path = cli_detail::resolve_against(base, row.path);
        cli_detail::require_file(volume_path, "volume");
        ScanSlices s = cli_detail::as_data_error([&] {
            Volume v = load_volume(volume_path.string());
            if (v.subject_id != row.subject_id || v.scan_id != row.scan_id || v.label != row.label)
                throw CliError(kExitData, volume_path.string() +
                                              ": embedded identity disagrees with the manifest row for " +
                                              row.subject_id + "/" + row.scan_id);
            return preprocess_volume(v, opt.target_size, opt.slices_per_scan);
        });
        std::string rel = row.subject_id + "_" + row.scan_id + ".slices";
        save_slices(s, (out / rel).string());
        slices_manifest.rows.push_back(ManifestRow{row.subject_id, row.scan_id, row.label, rel});
    }
    save_manifest(slices_manifest, (out / "slices_manifest.csv").string());
    os << "preprocess: wrote " << slices_manifest.rows.size() << " slice stacks (" << opt.slices_per_scan << " x "
       << opt.target_size << "x" << opt.target_size << ") under " << out.string() << "\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string data_manifest;
    std::string out_dir;
    TrainSettings settings;
    bool dry_run = false;
};

inline void print_train_plan(const TrainOptions& opt, const SplitPlan& plan, std::ostream& os) {
    const TrainSettings& s = opt.settings;
    os << "configuration:\n"
       << "  task              " << task_name(s.task) << "\n"
       << "  width multiplier  " << s.width.str() << "\n"
       << "  input size        " << s.input_size << "\n"
       << "  heads             " << s.heads << "\n"
       << "  value relative    " << (s.value_relative ? "yes" : "no") << "\n"
       << "  slices            " << s.slices << "\n"
       << "  folds             " << s.folds << "\n"
       << "  epochs per fold   " << s.epochs << "\n"
       << "  batch size        " << s.batch_size << "\n"
       << "  translations      " << s.translations << "\n"
       << "  learning rate     " << s.lr << "\n"
       << "  weight decay      " << s.weight_decay << "\n"
       << "  sharpness rho     " << s.rho << "\n"
       << "  seed              " << s.seed << "\n"
       << "  jobs              " << s.jobs << "\n"
       << "  data              " << opt.data_manifest << "\n"
       << "  out               " << opt.out_dir << "\n";
    os << "plan:\n"
       << "  train subjects    " << plan.train_subjects.size() << "\n"
       << "  val subjects      " << plan.val_subjects.size() << "\n"
       << "  test subjects     " << plan.test_subjects.size() << "\n";
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        os << "  fold " << f << " size       " << plan.folds[f].size() << "\n";
    os << "  training jobs     " << s.slices << " slices x " << plan.folds.size() << " folds = "
       << s.slices * static_cast<int>(plan.folds.size()) << "\n";
}

inline int cmd_train(const TrainOptions& opt, std::ostream& os) {
    namespace fs = std::filesystem;
    const TrainSettings& s = opt.settings;
    if (s.folds < 2) throw CliError(kExitConfig, "need at least 2 folds for cross-validation");
    if (s.epochs <= 0 || s.slices <= 0 || s.batch_size == 0)
        throw CliError(kExitConfig, "epochs, slices and batch size must be positive");

    std::vector<ScanSlices> scans = cli_detail::load_scan_set(opt.data_manifest);
    if (scans.empty()) throw CliError(kExitData, "slices manifest lists no scans");
    for (const auto& scan : scans) {
        if (static_cast<int>(scan.slices.size()) < s.slices)
            throw CliError(kExitData, scan.subject_id + "/" + scan.scan_id + " has " +
                                          std::to_string(scan.slices.size()) + " slices, need " +
                                          std::to_string(s.slices));
        if (scan.slices[0].rows != s.input_size || scan.slices[0].cols != s.input_size)
            throw CliError(kExitData, scan.subject_id + "/" + scan.scan_id + " slices are " +
                                          std::to_string(scan.slices[0].rows) + "x" +
                                          std::to_string(scan.slices[0].cols) + ", expected " +
                                          std::to_string(s.input_size) + "x" + std::to_string(s.input_size) +
                                          " (preprocess target must match the model input size)");
    }

    Manifest manifest;
    for (const auto& scan : scans)
        manifest.rows.push_back(ManifestRow{scan.subject_id, scan.scan_id, scan.label, ""});
    SplitPlan plan =
        cli_detail::as_data_error([&] { return make_split(manifest, s.task, SplitRatios{}, s.seed, s.folds); });

    print_train_plan(opt, plan, os);
    if (opt.dry_run) {
        os << "dry run, nothing written\n";
        return kExitOk;
    }

    fs::path out(opt.out_dir);
    fs::create_directories(out);
    save_split(plan, (out / "split.plan").string());

    auto t0 = std::chrono::steady_clock::now();
    SliceModelSet set = cli_detail::as_data_error([&] {
        return train_slice_models<cli_detail::Real>(scans, plan, s,
                                                    [&](const std::string& line) { os << line << "\n"; });
    });
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_curves(set, out.string());
    write_step_logs(set, out.string());
    write_checkpoints(set, out.string());
    cli_detail::append_run_log(out, "train completed in " + std::to_string(elapsed) + " s");

    os << "train: wrote split.plan, curves/, steps/ and models/ under " << out.string() << "\n";
    for (const auto& slice : set.slices)
        os << "  slice " << slice.slice_index << " best fold " << slice.best_fold << " epoch " << slice.best_epoch
           << " val acc " << slice.best_val_accuracy << "\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string data_manifest;
    std::string run_dir;
    std::string out_dir;  // empty: write next to the run artifacts
    std::size_t batch_size = 32;
};

inline int cmd_eval(const EvalOptions& opt, std::ostream& os) {
    namespace fs = std::filesystem;
    fs::path run(opt.run_dir);
    fs::path out = opt.out_dir.empty() ? run : fs::path(opt.out_dir);

    cli_detail::require_file(run / "split.plan", "split plan");
    SplitPlan plan = cli_detail::as_data_error([&] { return load_split((run / "split.plan").string()); });

    fs::path models_dir = run / "models";
    cli_detail::require_file(models_dir, "models directory");
    int max_index = -1;
    for (const auto& entry : fs::directory_iterator(models_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("slice", 0) != 0 || name.size() <= 10 || name.substr(name.size() - 5) != ".ckpt") continue;
        std::string digits = name.substr(5, name.size() - 10);
        if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
        max_index = std::max(max_index, std::stoi(digits));
    }
    if (max_index < 0) throw CliError(kExitMissing, "missing checkpoint: no slice*.ckpt under " + models_dir.string());

    std::vector<BotNetModel<cli_detail::Real>> models;
    std::vector<double> val_accuracies;
    for (int i = 0; i <= max_index; ++i) {
        fs::path p = models_dir / ("slice" + std::to_string(i) + ".ckpt");
        cli_detail::require_file(p, "checkpoint");
        cli_detail::as_data_error([&] {
            Checkpoint ckpt = Checkpoint::load_file(p.string());
            if (ckpt.meta_or_throw("task") != task_name(plan.task))
                throw std::runtime_error(p.string() + ": checkpoint task " + ckpt.meta_or_throw("task") +
                                         " does not match the split plan task " + task_name(plan.task));
            val_accuracies.push_back(std::stod(ckpt.meta_or_throw("val_accuracy")));
            models.push_back(model_from_checkpoint<cli_detail::Real>(ckpt));
        });
    }

    std::vector<ScanSlices> scans = cli_detail::load_scan_set(opt.data_manifest);
    auto t0 = std::chrono::steady_clock::now();
    EvalOutputs results = cli_detail::as_data_error(
        [&] { return evaluate_ensemble<cli_detail::Real>(models, val_accuracies, scans, plan, opt.batch_size); });
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out);
    write_metrics_json(results, (out / "metrics.json").string());
    write_roc_csv(results.metrics.roc_points, (out / "roc.csv").string());
    write_predictions_csv(results.records, (out / "predictions.csv").string());
    cli_detail::append_run_log(out, "eval completed in " + std::to_string(elapsed) + " s");

    os << "eval: " << models.size() << " slice models, " << results.n_scans << " holdout scans ("
       << results.n_subjects << " subjects, " << results.skipped_scans << " skipped)\n"
       << "  holdout accuracy (scan)    " << results.metrics.accuracy << "\n"
       << "  holdout accuracy (subject) " << results.subject_accuracy << "\n"
       << "  roc auc                    " << results.metrics.roc_auc << "\n"
       << "  wrote metrics.json, roc.csv and predictions.csv under " << out.string() << "\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// verify

struct VerifyOptions {
    Sabotage sabotage = Sabotage::none;
};

inline int cmd_verify(const VerifyOptions& opt, std::ostream& os) {
    std::vector<CheckResult> results = run_verification(opt.sabotage);
    print_verification(results, os);
    return all_passed(results) ? kExitOk : kExitVerify;
}

// --------------------------------------------------------------------------
// report

struct ReportOptions {
    std::string run_dir;
};

inline int cmd_report(const ReportOptions& opt, std::ostream& os) {
    namespace fs = std::filesystem;
    fs::path path = fs::path(opt.run_dir) / "metrics.json";
    cli_detail::require_file(path, "metrics.json");
    nlohmann::json j = cli_detail::as_data_error([&] {
        std::ifstream in(path);
        return nlohmann::json::parse(in);
    });

    auto cell = [&](const char* key) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(4) << j.at(key).get<double>();
        return v.str();
    };
    os << "task: " << j.at("task").get<std::string>() << "  (" << j.at("n_scans").get<std::size_t>() << " scans, "
       << j.at("n_subjects").get<std::size_t>() << " subjects, " << j.at("skipped_scans").get<std::size_t>()
       << " skipped)\n";
    os << "precision  recall  f1      roc_auc  holdout_acc(scan)  holdout_acc(subject)  validation_acc\n";
    os << cell("precision") << "     " << cell("recall") << "  " << cell("f1") << "  " << cell("roc_auc") << "   "
       << cell("holdout_accuracy") << "             " << cell("holdout_subject_accuracy") << "                "
       << cell("validation_accuracy") << "\n";
    return kExitOk;
}

}  // namespace botkit
