#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "botkit/ensemble.hpp"

using botkit::Diagnosis;
using botkit::EvalOutputs;
using botkit::FoldOutcome;
using botkit::Manifest;
using botkit::ManifestRow;
using botkit::PredictionRecord;
using botkit::ScanSlices;
using botkit::SliceModelSet;
using botkit::SliceResult;
using botkit::SplitPlan;
using botkit::TaskKind;
using botkit::TrainSettings;
using Catch::Matchers::ContainsSubstring;
using Real = float;

namespace {

// Small separable corpus: 8 subjects per class, one scan each, 64^3 volumes
// preprocessed to 32x32 slices.
struct MiniData {
    std::vector<ScanSlices> scans;
    Manifest manifest;
    SplitPlan plan;
};

MiniData make_mini_data(int slices, int folds, std::uint64_t seed) {
    auto [small, large] = botkit::synthetic_profiles(false);
    MiniData d;
    for (int cls = 0; cls < 2; ++cls)
        for (int i = 0; i < 8; ++i) {
            std::string subject = (cls ? "ad" : "cn") + std::to_string(i);
            Diagnosis diag = cls ? Diagnosis::ad : Diagnosis::cn;
            botkit::Volume v =
                botkit::generate_synthetic_volume(cls ? large : small, subject, "scan0", diag, seed, 64);
            ScanSlices s = botkit::preprocess_volume(v, 32, slices);
            d.scans.push_back(std::move(s));
            d.manifest.rows.push_back(ManifestRow{subject, "scan0", diag, subject + ".vol"});
        }
    d.plan = botkit::make_split(d.manifest, TaskKind::ad_vs_cn, botkit::SplitRatios{}, seed, folds);
    return d;
}

TrainSettings mini_settings(int slices, int folds, std::uint64_t seed) {
    TrainSettings s;
    s.task = TaskKind::ad_vs_cn;
    s.input_size = 32;
    s.width = botkit::Rational{1, 8};
    s.slices = slices;
    s.folds = folds;
    s.epochs = 2;
    s.batch_size = 16;
    s.seed = seed;
    return s;
}

std::string checkpoint_bytes(const botkit::Checkpoint& ckpt) {
    std::ostringstream ss;
    ckpt.save(ss);
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("fold selection keeps the best accuracy with earlier-fold ties") {
    SliceResult slice;
    slice.slice_index = 2;
    for (int f = 0; f < 3; ++f) {
        FoldOutcome o;
        o.fold = f;
        o.best_epoch = 4 - f;
        o.best_val_accuracy = f == 0 ? 0.7 : 0.9;  // folds 1 and 2 tie at 0.9
        slice.folds.push_back(std::move(o));
    }
    botkit::select_best_fold(slice);
    REQUIRE(slice.best_fold == 1);
    REQUIRE(slice.best_val_accuracy == 0.9);
    REQUIRE(slice.best_epoch == 3);

    slice.folds[1].failed = true;  // the winner drops out, fold 2 takes over
    botkit::select_best_fold(slice);
    REQUIRE(slice.best_fold == 2);

    for (auto& f : slice.folds) f.failed = true;
    REQUIRE_THROWS_WITH(botkit::select_best_fold(slice), ContainsSubstring("all folds failed"));
}

TEST_CASE("a mini training run produces complete bookkeeping") {
    MiniData d = make_mini_data(2, 2, 11);
    TrainSettings s = mini_settings(2, 2, 11);
    SliceModelSet set = botkit::train_slice_models<Real>(d.scans, d.plan, s);

    REQUIRE(set.task == TaskKind::ad_vs_cn);
    REQUIRE(set.slices.size() == 2);
    for (const auto& slice : set.slices) {
        REQUIRE(slice.folds.size() == 2);
        REQUIRE(slice.best_fold >= 0);
        REQUIRE(slice.best_epoch >= 1);
        REQUIRE(slice.best_val_accuracy >= 0.0);
        REQUIRE(slice.best_val_accuracy <= 1.0);
        for (const auto& fold : slice.folds) {
            REQUIRE_FALSE(fold.failed);
            REQUIRE(fold.curve.size() == 2);  // one row per epoch
            REQUIRE_FALSE(fold.steps.empty());
            for (const auto& row : fold.curve) {
                REQUIRE(std::isfinite(row.train_loss));
                REQUIRE(row.train_acc >= 0.0);
                REQUIRE(row.train_acc <= 1.0);
                REQUIRE(std::isfinite(row.val_loss));
            }
            for (const auto& row : fold.steps) {
                REQUIRE(std::isfinite(row.loss_w));
                REQUIRE(std::isfinite(row.loss_w_plus_eps));
                REQUIRE(row.grad_norm >= 0.0);
            }
            // steps are numbered densely across the whole fold
            for (std::size_t i = 0; i < fold.steps.size(); ++i)
                REQUIRE(fold.steps[i].step == static_cast<int>(i + 1));
        }
        // the kept checkpoint matches the winning fold's record
        const FoldOutcome& winner = slice.folds[static_cast<std::size_t>(slice.best_fold)];
        REQUIRE(winner.best_val_accuracy == slice.best_val_accuracy);
        REQUIRE(slice.best.meta_or_throw("fold") == std::to_string(slice.best_fold));
        REQUIRE(slice.best.meta_or_throw("epoch") == std::to_string(slice.best_epoch));
        REQUIRE(slice.best.meta_or_throw("task") == "ad_vs_cn");
    }
}

TEST_CASE("training is deterministic and independent of the worker count") {
    MiniData d = make_mini_data(2, 2, 23);
    TrainSettings s = mini_settings(2, 2, 23);

    SliceModelSet a = botkit::train_slice_models<Real>(d.scans, d.plan, s);
    SliceModelSet b = botkit::train_slice_models<Real>(d.scans, d.plan, s);
    s.jobs = 3;
    SliceModelSet c = botkit::train_slice_models<Real>(d.scans, d.plan, s);

    for (std::size_t i = 0; i < a.slices.size(); ++i) {
        REQUIRE(checkpoint_bytes(a.slices[i].best) == checkpoint_bytes(b.slices[i].best));
        REQUIRE(checkpoint_bytes(a.slices[i].best) == checkpoint_bytes(c.slices[i].best));
        REQUIRE(a.slices[i].best_fold == c.slices[i].best_fold);
        for (std::size_t f = 0; f < a.slices[i].folds.size(); ++f) {
            REQUIRE(a.slices[i].folds[f].curve.size() == c.slices[i].folds[f].curve.size());
            for (std::size_t e = 0; e < a.slices[i].folds[f].curve.size(); ++e) {
                REQUIRE(a.slices[i].folds[f].curve[e].train_loss == c.slices[i].folds[f].curve[e].train_loss);
                REQUIRE(a.slices[i].folds[f].curve[e].val_acc == c.slices[i].folds[f].curve[e].val_acc);
            }
        }
    }
}

TEST_CASE("a run where every fold diverges fails the slice") {
    MiniData d = make_mini_data(1, 2, 31);
    TrainSettings s = mini_settings(1, 2, 31);
    s.lr = 1e18;  // drives the float parameters to overflow immediately
    s.epochs = 2;
    REQUIRE_THROWS_WITH(botkit::train_slice_models<Real>(d.scans, d.plan, s), ContainsSubstring("all folds failed"));
}

TEST_CASE("ensemble prediction votes per scan and tallies short scans") {
    MiniData d = make_mini_data(3, 2, 47);
    std::vector<botkit::BotNetModel<Real>> models;
    botkit::BotNet50Config cfg;
    cfg.input_size = 32;
    cfg.width = botkit::Rational{1, 8};
    for (int i = 0; i < 3; ++i) models.push_back(botkit::build_botnet50<Real>(cfg, 100 + static_cast<std::uint64_t>(i)));

    std::vector<ScanSlices> scans = d.scans;
    scans[0].slices.pop_back();  // one scan misses a slice
    ScanSlices outside;          // and one scan is outside the task entirely
    outside.subject_id = "mci0";
    outside.scan_id = "scan0";
    outside.label = Diagnosis::mci_c;
    outside.slices = d.scans[1].slices;
    scans.push_back(outside);

    botkit::EnsemblePredictions preds = botkit::ensemble_predict_all(models, scans, TaskKind::ad_vs_cn);
    REQUIRE(preds.skipped_scans == 1);
    REQUIRE(preds.records.size() == d.scans.size() - 1);
    for (const auto& rec : preds.records) {
        REQUIRE(rec.slice_probabilities.size() == 3);
        double mean = 0.0;
        std::vector<int> labels;
        for (double p : rec.slice_probabilities) {
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
            mean += p / 3.0;
            labels.push_back(p > 0.5 ? 1 : 0);
        }
        REQUIRE(rec.ensemble_probability == Catch::Approx(mean).margin(1e-12));
        REQUIRE(rec.ensemble_label == botkit::majority_vote(labels, rec.slice_probabilities).label);
        REQUIRE(rec.subject_id != "mci0");
    }
}

TEST_CASE("subject accuracy aggregates scans by majority with mean tie-break") {
    auto rec = [](const std::string& subject, const std::string& scan, int label, double prob, int truth) {
        PredictionRecord r;
        r.subject_id = subject;
        r.scan_id = scan;
        r.ensemble_label = label;
        r.ensemble_probability = prob;
        r.true_label = truth;
        return r;
    };
    // subject a: unanimous correct; subject b: 1-1 tie, mean 0.55 votes 1 against truth 0
    std::vector<PredictionRecord> records{
        rec("a", "s0", 1, 0.8, 1), rec("a", "s1", 1, 0.9, 1),
        rec("b", "s0", 1, 0.9, 0), rec("b", "s1", 0, 0.2, 0),
    };
    REQUIRE(botkit::subject_level_accuracy(records) == 0.5);

    records.push_back(rec("b", "s2", 1, 0.9, 1));  // conflicting truth for subject b
    REQUIRE_THROWS_WITH(botkit::subject_level_accuracy(records), ContainsSubstring("conflicting"));
}

TEST_CASE("holdout evaluation and artifact writers close the loop") {
    MiniData d = make_mini_data(2, 2, 59);
    TrainSettings s = mini_settings(2, 2, 59);
    SliceModelSet set = botkit::train_slice_models<Real>(d.scans, d.plan, s);

    std::vector<botkit::BotNetModel<Real>> models;
    std::vector<double> val_accs;
    for (const auto& slice : set.slices) {
        models.push_back(botkit::model_from_checkpoint<Real>(slice.best));
        val_accs.push_back(slice.best_val_accuracy);
    }
    EvalOutputs out = botkit::evaluate_ensemble(models, val_accs, d.scans, d.plan);

    std::set<std::string> holdout(d.plan.test_subjects.begin(), d.plan.test_subjects.end());
    REQUIRE(out.records.size() == holdout.size());  // one scan per subject in the corpus
    for (const auto& rec : out.records) REQUIRE(holdout.count(rec.subject_id) == 1);
    REQUIRE(out.n_scans == out.records.size());
    REQUIRE(out.n_subjects == holdout.size());
    REQUIRE(out.metrics.counts.total() == static_cast<long>(out.n_scans));
    REQUIRE(out.validation_accuracy ==
            Catch::Approx((val_accs[0] + val_accs[1]) / 2.0).margin(1e-12));
    REQUIRE(out.metrics.roc_points.front().fpr == 0.0);
    REQUIRE(out.metrics.roc_points.back().tpr == 1.0);

    auto dir = temp_dir("botkit_ensemble_artifacts");
    botkit::write_curves(set, dir.string());
    botkit::write_step_logs(set, dir.string());
    botkit::write_checkpoints(set, dir.string());
    botkit::write_metrics_json(out, (dir / "metrics.json").string());
    botkit::write_roc_csv(out.metrics.roc_points, (dir / "roc.csv").string());
    botkit::write_predictions_csv(out.records, (dir / "predictions.csv").string());

    for (int slice = 0; slice < 2; ++slice)
        for (int fold = 0; fold < 2; ++fold) {
            std::string curve = botkit::read_text_file(
                (dir / "curves" / std::to_string(slice) / (std::to_string(fold) + ".csv")).string());
            REQUIRE(curve.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
            REQUIRE(count_lines(curve) == 1 + 2);  // header + one row per epoch
            std::string steps = botkit::read_text_file(
                (dir / "steps" / std::to_string(slice) / (std::to_string(fold) + ".csv")).string());
            REQUIRE(steps.rfind("epoch,step,loss_w,loss_w_plus_eps,grad_norm\n", 0) == 0);
            REQUIRE(count_lines(steps) ==
                    1 + set.slices[static_cast<std::size_t>(slice)].folds[static_cast<std::size_t>(fold)].steps.size());
        }

    auto loaded = botkit::Checkpoint::load_file((dir / "models" / "slice0.ckpt").string());
    REQUIRE(loaded.meta_or_throw("slice_index") == "0");
    botkit::BotNetModel<Real> reloaded = botkit::model_from_checkpoint<Real>(loaded);
    REQUIRE(reloaded.config.input_size == 32);

    auto parsed = nlohmann::json::parse(botkit::read_text_file((dir / "metrics.json").string()));
    for (const char* key : {"task", "precision", "recall", "f1", "roc_auc", "holdout_accuracy",
                            "holdout_subject_accuracy", "validation_accuracy", "confusion", "n_scans"})
        REQUIRE(parsed.contains(key));
    REQUIRE(parsed["task"] == "ad_vs_cn");
    REQUIRE(parsed["n_scans"].get<std::size_t>() == out.n_scans);

    std::string roc = botkit::read_text_file((dir / "roc.csv").string());
    REQUIRE(roc.rfind("fpr,tpr,threshold\n", 0) == 0);
    REQUIRE(count_lines(roc) == 1 + out.metrics.roc_points.size());

    std::string predictions = botkit::read_text_file((dir / "predictions.csv").string());
    REQUIRE(predictions.rfind("subject_id,scan_id,true_label,ensemble_label,ensemble_prob,slice_prob_0,slice_prob_1\n",
                              0) == 0);
    REQUIRE(count_lines(predictions) == 1 + out.records.size());

    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation rejects an empty holdout") {
    MiniData d = make_mini_data(1, 2, 71);
    std::vector<botkit::BotNetModel<Real>> models;
    botkit::BotNet50Config cfg;
    cfg.input_size = 32;
    cfg.width = botkit::Rational{1, 8};
    models.push_back(botkit::build_botnet50<Real>(cfg, 5));
    SplitPlan empty = d.plan;
    empty.test_subjects.clear();
    REQUIRE_THROWS_WITH(botkit::evaluate_ensemble(models, {}, d.scans, empty), ContainsSubstring("holdout"));
}
