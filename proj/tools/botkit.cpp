// botkit: synthesize volumes, slice them, train the attention-stage ensemble,
// evaluate the holdout and run the self-check battery. One subcommand per
// pipeline stage; see README.md for a walkthrough.
//
// Option precedence: command-line flag > --config file > BOTKIT_WORKDIR (for
// the work directory) > built-in default. Built-in defaults are the full
// paper-scale settings; --mode desk shrinks width, input size, folds and
// epochs to something a laptop CPU finishes in minutes.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "botkit/commands.hpp"

namespace {

using namespace botkit;

std::filesystem::path resolve_workdir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("BOTKIT_WORKDIR"); env && *env) return env;
    return ".";
}

// Mode presets fill any option the user left untouched; explicit flags and
// config-file values always win.
struct ModePreset {
    std::string width;
    std::size_t input_size;
    int folds;
    int epochs;
};

ModePreset preset_for(const std::string& mode) {
    if (mode == "desk") return {"1/8", 32, 2, 5};
    return {"1/1", 224, 5, 60};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bottleneck-transformer slice-ensemble toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file (key=value lines, [subcommand] sections)");

    const std::vector<std::string> task_names{"ad_vs_cn", "mcic_vs_cn", "mcic_vs_mcinc"};
    const std::vector<std::string> mode_names{"desk", "paper"};

    // synth ------------------------------------------------------------
    SynthOptions synth;
    std::string synth_workdir, synth_out, synth_task = "ad_vs_cn";
    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic volume corpus");
    synth_cmd->add_option("--workdir", synth_workdir, "base directory for default paths");
    synth_cmd->add_option("--out", synth_out, "output directory (default <workdir>/data)");
    synth_cmd->add_option("--task", synth_task, "label pair to synthesize")->check(CLI::IsMember(task_names));
    synth_cmd->add_option("--subjects", synth.subjects_per_class, "subjects per class")->capture_default_str();
    synth_cmd->add_option("--scans", synth.scans_per_subject, "scans per subject")->capture_default_str();
    synth_cmd->add_option("--extent", synth.extent, "cubic volume edge length")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "corpus seed")->capture_default_str();
    synth_cmd->add_flag("--null", synth.null_signal, "draw both classes from the same shape profile");

    // preprocess ---------------------------------------------------------
    PreprocessOptions prep;
    std::string prep_workdir, prep_manifest, prep_out, prep_mode = "paper";
    auto* prep_cmd = app.add_subcommand("preprocess", "slice volumes into normalized image stacks");
    prep_cmd->add_option("--workdir", prep_workdir, "base directory for default paths");
    prep_cmd->add_option("--manifest", prep_manifest, "volume manifest (default <workdir>/data/manifest.csv)");
    prep_cmd->add_option("--out", prep_out, "output directory (default <workdir>/slices)");
    prep_cmd->add_option("--mode", prep_mode, "desk or paper scale defaults")->check(CLI::IsMember(mode_names));
    auto* prep_size = prep_cmd->add_option("--target-size", prep.target_size, "slice edge length after crop/pad");
    prep_cmd->add_option("--slices", prep.slices_per_scan, "central slices per scan")->capture_default_str();

    // train --------------------------------------------------------------
    TrainOptions train;
    std::string train_workdir, train_data, train_out, train_task = "ad_vs_cn", train_mode = "paper",
                train_width = "1/1";
    auto* train_cmd = app.add_subcommand("train", "train the per-slice model ensemble");
    train_cmd->add_option("--workdir", train_workdir, "base directory for default paths");
    train_cmd->add_option("--data", train_data, "slices manifest (default <workdir>/slices/slices_manifest.csv)");
    train_cmd->add_option("--out", train_out, "run directory (default <workdir>/run)");
    train_cmd->add_option("--task", train_task, "classification task")->check(CLI::IsMember(task_names));
    train_cmd->add_option("--mode", train_mode, "desk or paper scale defaults")->check(CLI::IsMember(mode_names));
    auto* train_width_opt = train_cmd->add_option("--width", train_width, "channel width multiplier, e.g. 1/8");
    auto* train_size = train_cmd->add_option("--input-size", train.settings.input_size, "model input edge length");
    auto* train_folds = train_cmd->add_option("--folds", train.settings.folds, "cross-validation folds");
    auto* train_epochs = train_cmd->add_option("--epochs", train.settings.epochs, "epochs per fold");
    train_cmd->add_option("--slices", train.settings.slices, "slice models in the ensemble")->capture_default_str();
    train_cmd->add_option("--heads", train.settings.heads, "attention heads")->capture_default_str();
    train_cmd->add_option("--batch-size", train.settings.batch_size, "training batch size")->capture_default_str();
    train_cmd->add_option("--translations", train.settings.translations, "shifted copies per training sample")->capture_default_str();
    train_cmd->add_option("--lr", train.settings.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--weight-decay", train.settings.weight_decay, "decoupled weight decay")->capture_default_str();
    train_cmd->add_option("--rho", train.settings.rho, "sharpness-aware perturbation radius")->capture_default_str();
    train_cmd->add_option("--seed", train.settings.seed, "split and training seed")->capture_default_str();
    train_cmd->add_option("--jobs", train.settings.jobs, "parallel training workers")->capture_default_str();
    train_cmd->add_flag("--value-relative", train.settings.value_relative,
                        "add position-dependent value terms to attention outputs");
    train_cmd->add_flag("--dry-run", train.dry_run, "print the resolved configuration and plan, then exit");

    // eval ---------------------------------------------------------------
    EvalOptions eval;
    std::string eval_workdir, eval_data, eval_run, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "score the holdout subjects with a trained ensemble");
    eval_cmd->add_option("--workdir", eval_workdir, "base directory for default paths");
    eval_cmd->add_option("--data", eval_data, "slices manifest (default <workdir>/slices/slices_manifest.csv)");
    eval_cmd->add_option("--run", eval_run, "run directory holding split.plan and models/ (default <workdir>/run)");
    eval_cmd->add_option("--out", eval_out, "output directory (default: the run directory)");
    eval_cmd->add_option("--batch-size", eval.batch_size, "inference batch size")->capture_default_str();

    // verify -------------------------------------------------------------
    std::string verify_bug = "none";
    auto* verify_cmd = app.add_subcommand("verify", "run the numeric and invariant self-check battery");
    verify_cmd->add_option("--inject-bug", verify_bug,
                           "plant a known defect (softmax-axis, unscaled-rel-logits, leaked-subject)");

    // report -------------------------------------------------------------
    std::string report_workdir, report_run;
    auto* report_cmd = app.add_subcommand("report", "print the metrics table for a finished run");
    report_cmd->add_option("--workdir", report_workdir, "base directory for default paths");
    report_cmd->add_option("--run", report_run, "run directory holding metrics.json (default <workdir>/run)");

    // Lets --config (and any future app-level option) appear after the
    // subcommand name, which is how people actually type it.
    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth_cmd->parsed()) {
            auto wd = resolve_workdir(synth_workdir);
            synth.out_dir = synth_out.empty() ? (wd / "data").string() : synth_out;
            synth.task = parse_task(synth_task);
            return cmd_synth(synth, std::cout);
        }
        if (prep_cmd->parsed()) {
            auto wd = resolve_workdir(prep_workdir);
            prep.manifest_path = prep_manifest.empty() ? (wd / "data" / "manifest.csv").string() : prep_manifest;
            prep.out_dir = prep_out.empty() ? (wd / "slices").string() : prep_out;
            if (prep_size->count() == 0) prep.target_size = preset_for(prep_mode).input_size;
            return cmd_preprocess(prep, std::cout);
        }
        if (train_cmd->parsed()) {
            auto wd = resolve_workdir(train_workdir);
            train.data_manifest =
                train_data.empty() ? (wd / "slices" / "slices_manifest.csv").string() : train_data;
            train.out_dir = train_out.empty() ? (wd / "run").string() : train_out;
            train.settings.task = parse_task(train_task);
            ModePreset preset = preset_for(train_mode);
            if (train_width_opt->count() == 0) train_width = preset.width;
            if (train_size->count() == 0) train.settings.input_size = preset.input_size;
            if (train_folds->count() == 0) train.settings.folds = preset.folds;
            if (train_epochs->count() == 0) train.settings.epochs = preset.epochs;
            try {
                train.settings.width = Rational::parse(train_width);
            } catch (const std::exception& e) {
                throw CliError(kExitConfig, std::string("--width: ") + e.what());
            }
            return cmd_train(train, std::cout);
        }
        if (eval_cmd->parsed()) {
            auto wd = resolve_workdir(eval_workdir);
            eval.data_manifest = eval_data.empty() ? (wd / "slices" / "slices_manifest.csv").string() : eval_data;
            eval.run_dir = eval_run.empty() ? (wd / "run").string() : eval_run;
            eval.out_dir = eval_out;
            return cmd_eval(eval, std::cout);
        }
        if (verify_cmd->parsed()) {
            VerifyOptions opt;
            try {
                opt.sabotage = parse_sabotage(verify_bug);
            } catch (const std::exception& e) {
                throw CliError(kExitConfig, std::string("--inject-bug: ") + e.what());
            }
            return cmd_verify(opt, std::cout);
        }
        if (report_cmd->parsed()) {
            auto wd = resolve_workdir(report_workdir);
            ReportOptions opt;
            opt.run_dir = report_run.empty() ? (wd / "run").string() : report_run;
            return cmd_report(opt, std::cout);
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
