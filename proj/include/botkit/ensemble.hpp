#pragma once

// Ten-slice ensemble training and evaluation.
//
// One model is trained per slice index. Each slice trains across the plan's
// folds (fold f validates on fold-f subjects and trains on the rest), and the
// slice keeps the single checkpoint with the highest validation accuracy;
// ties prefer the earlier fold, then the earlier epoch. Training uses the
// two-pass sharpness-aware step: batch statistics are fresh on the first pass
// and frozen on the perturbed second pass so running statistics update once
// per step. A fold whose loss or gradients go non-finite is aborted and
// recorded; a slice where every fold aborts fails the run.
//
// Every (slice, fold) job derives its RNG stream from (seed, slice, fold)
// only, so results are byte-identical no matter how many workers run them.
//
// Evaluation loads the ten models, scores every holdout scan per slice, takes
// the majority vote over per-slice argmax labels (tie: mean probability
// >= 0.5) and uses the mean class-1 probability as the ROC score. Metrics are
// scan-level; a subject-level accuracy (majority over a subject's scans) is
// reported alongside.
//
// Artifact layout under an output directory:
//   curves/<slice>/<fold>.csv   epoch,train_loss,train_acc,val_loss,val_acc
//   steps/<slice>/<fold>.csv    epoch,step,loss_w,loss_w_plus_eps,grad_norm
//   models/slice<i>.ckpt        best checkpoint per slice
//   metrics.json, roc.csv, predictions.csv

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "botkit/botnet.hpp"
#include "botkit/metrics.hpp"
#include "botkit/pipeline.hpp"
#include "botkit/sam.hpp"

namespace botkit {

struct TrainSettings {
    TaskKind task = TaskKind::ad_vs_cn;
    std::size_t input_size = 224;
    Rational width{1, 1};
    std::size_t heads = 8;
    bool value_relative = false;
    int slices = 10;
    int folds = 5;
    int epochs = 60;
    std::size_t batch_size = 16;
    int translations = 2;  // augmented shifted copies per training sample
    double lr = 3e-5;
    double weight_decay = 3e-5;
    double rho = 0.05;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct CurveRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct StepRow {
    int epoch = 0;
    int step = 0;  // 1-based within the fold
    double loss_w = 0.0;
    double loss_w_plus_eps = 0.0;
    double grad_norm = 0.0;
};

struct FoldOutcome {
    int fold = -1;
    bool failed = false;
    std::string failure;
    std::vector<CurveRow> curve;
    std::vector<StepRow> steps;
    double best_val_accuracy = -1.0;
    int best_epoch = -1;
    Checkpoint best;
};

struct SliceResult {
    int slice_index = -1;
    std::vector<FoldOutcome> folds;
    int best_fold = -1;
    int best_epoch = -1;
    double best_val_accuracy = -1.0;
    Checkpoint best;
};

struct SliceModelSet {
    TaskKind task = TaskKind::ad_vs_cn;
    std::vector<SliceResult> slices;
};

namespace detail {

// [N,3,S,S] batch; the grayscale slice is replicated across the 3 channels.
template <class T>
Tensor<T> slice_batch(const std::vector<const SliceSample*>& items, std::size_t input_size) {
    std::size_t n = items.size();
    std::vector<T> data(n * kInputChannels * input_size * input_size);
    for (std::size_t i = 0; i < n; ++i) {
        const Image& img = items[i]->pixels;
        if (img.rows != input_size || img.cols != input_size)
            throw std::invalid_argument("sample is " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                                        ", model expects " + std::to_string(input_size));
        for (std::size_t c = 0; c < kInputChannels; ++c)
            for (std::size_t p = 0; p < img.pix.size(); ++p)
                data[(i * kInputChannels + c) * img.pix.size() + p] = static_cast<T>(img.pix[p]);
    }
    return Tensor<T>::from_data({n, kInputChannels, input_size, input_size}, std::move(data));
}

template <class T>
std::size_t count_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
    std::size_t correct = 0;
    std::size_t classes = logits.size(1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const T* row = logits.data().data() + i * classes;
        std::size_t arg = 0;
        for (std::size_t k = 1; k < classes; ++k)
            if (row[k] > row[arg]) arg = k;
        correct += arg == static_cast<std::size_t>(labels[i]) ? 1 : 0;
    }
    return correct;
}

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Mean loss and accuracy over samples with running statistics, no graph.
template <class T>
EvalStats evaluate_samples(BotNetModel<T>& model, const std::vector<SliceSample>& samples, std::size_t batch_size) {
    if (samples.empty()) throw std::invalid_argument("evaluate_samples: empty sample set");
    NoGradGuard guard;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < samples.size(); at += batch_size) {
        std::size_t n = std::min(batch_size, samples.size() - at);
        std::vector<const SliceSample*> items;
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            items.push_back(&samples[at + i]);
            labels.push_back(samples[at + i].label);
        }
        Tensor<T> logits = forward(model, slice_batch<T>(items, model.config.input_size), BnMode::eval);
        loss_sum += static_cast<double>(cross_entropy(logits, labels).data()[0]) * static_cast<double>(n);
        correct += count_correct(logits, labels);
    }
    return {loss_sum / static_cast<double>(samples.size()),
            static_cast<double>(correct) / static_cast<double>(samples.size())};
}

}  // namespace detail

// Trains one (slice, fold) job. Never throws for divergence; a non-finite
// loss or gradient marks the outcome failed and leaves the logs collected so
// far in place.
template <class T>
FoldOutcome train_one_fold(const std::vector<ScanSlices>& scans, const SplitPlan& plan, const TrainSettings& s,
                           int slice_index, int fold) {
    FoldOutcome out;
    out.fold = fold;

    auto base = slice_stream(scans, plan, slice_index, static_cast<std::size_t>(fold), StreamRole::fold_train);
    auto val = slice_stream(scans, plan, slice_index, static_cast<std::size_t>(fold), StreamRole::fold_val);
    auto hold = slice_stream(scans, plan, slice_index, static_cast<std::size_t>(fold), StreamRole::holdout);
    check_stream_disjoint(base, val, hold);
    if (base.empty() || val.empty())
        throw std::invalid_argument("fold " + std::to_string(fold) + " has an empty train or validation stream");

    std::uint64_t job_seed = mix_seed(s.seed, static_cast<std::uint64_t>(slice_index), static_cast<std::uint64_t>(fold));
    std::mt19937_64 rng(job_seed);
    std::vector<SliceSample> train;
    for (const auto& sample : base)
        for (auto& a : augment(sample, rng, s.translations)) train.push_back(std::move(a));

    BotNet50Config cfg;
    cfg.input_size = s.input_size;
    cfg.width = s.width;
    cfg.heads = s.heads;
    cfg.value_relative = s.value_relative;
    BotNetModel<T> model = build_botnet50<T>(cfg, mix_seed(job_seed, 0xb057));

    std::vector<Tensor<T>> params;
    for (auto& [name, t] : model_parameters(model)) params.push_back(t);
    AdamConfig<T> adam;
    adam.lr = static_cast<T>(s.lr);
    adam.weight_decay = static_cast<T>(s.weight_decay);
    SamAdam<T> opt(params, adam, SamConfig<T>{static_cast<T>(s.rho)});

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step_no = 0;
    for (int epoch = 1; epoch <= s.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0, batches = 0;
        for (std::size_t at = 0; at < order.size(); at += s.batch_size) {
            std::size_t n = std::min(s.batch_size, order.size() - at);
            if (n < 2) continue;  // batch statistics need at least two values per channel
            std::vector<const SliceSample*> items;
            std::vector<int> labels;
            for (std::size_t i = 0; i < n; ++i) {
                items.push_back(&train[order[at + i]]);
                labels.push_back(train[order[at + i]].label);
            }
            Tensor<T> x = detail::slice_batch<T>(items, s.input_size);
            StepReport<T> report;
            try {
                report = opt.step([&](int pass) {
                    BnMode mode = pass == 1 ? BnMode::train : BnMode::train_frozen_stats;
                    Tensor<T> logits = forward(model, x, mode);
                    if (pass == 1) correct += detail::count_correct(logits, labels);
                    return cross_entropy(logits, labels);
                });
            } catch (const std::runtime_error& e) {
                out.failed = true;
                out.failure = e.what();
                return out;
            }
            ++step_no;
            out.steps.push_back({epoch, step_no, static_cast<double>(report.loss_w),
                                 static_cast<double>(report.loss_w_plus_eps),
                                 static_cast<double>(report.grad_norm)});
            if (!std::isfinite(static_cast<double>(report.loss_w))) {
                out.failed = true;
                out.failure = "non-finite loss at epoch " + std::to_string(epoch);
                return out;
            }
            loss_sum += static_cast<double>(report.loss_w) * static_cast<double>(n);
            seen += n;
            ++batches;
        }
        if (batches == 0) throw std::invalid_argument("training stream too small for the batch size");

        detail::EvalStats vs = detail::evaluate_samples(model, val, s.batch_size);
        CurveRow row{epoch, loss_sum / static_cast<double>(seen),
                     static_cast<double>(correct) / static_cast<double>(seen), vs.loss, vs.accuracy};
        out.curve.push_back(row);
        if (vs.accuracy > out.best_val_accuracy) {
            out.best_val_accuracy = vs.accuracy;
            out.best_epoch = epoch;
            std::ostringstream acc;
            acc.precision(17);
            acc << vs.accuracy;
            out.best = to_checkpoint(model, {{"task", task_name(plan.task)},
                                             {"slice_index", std::to_string(slice_index)},
                                             {"fold", std::to_string(fold)},
                                             {"epoch", std::to_string(epoch)},
                                             {"val_accuracy", acc.str()},
                                             {"train_seed", std::to_string(s.seed)}});
        }
    }
    return out;
}

// Picks the winning fold for a slice: highest validation accuracy, ties going
// to the earlier fold (and within a fold the earlier epoch already won the
// same way). Failed folds are skipped; no surviving fold fails the slice.
inline void select_best_fold(SliceResult& slice) {
    slice.best_fold = -1;
    slice.best_epoch = -1;
    slice.best_val_accuracy = -1.0;
    for (auto& fold : slice.folds) {
        if (fold.failed) continue;
        if (fold.best_val_accuracy > slice.best_val_accuracy) {
            slice.best_val_accuracy = fold.best_val_accuracy;
            slice.best_fold = fold.fold;
            slice.best_epoch = fold.best_epoch;
            slice.best = fold.best;
        }
    }
    if (slice.best_fold < 0)
        throw std::runtime_error("slice " + std::to_string(slice.slice_index) + ": all folds failed");
}

// Trains slices x folds jobs (optionally on several workers) and keeps the
// best checkpoint per slice. Throws when any slice has no successful fold.
template <class T>
SliceModelSet train_slice_models(const std::vector<ScanSlices>& scans, const SplitPlan& plan, const TrainSettings& s,
                                 const std::function<void(const std::string&)>& log = {}) {
    if (s.slices <= 0) throw std::invalid_argument("slice count must be positive");
    int folds = static_cast<int>(plan.folds.size());
    SliceModelSet set;
    set.task = plan.task;
    set.slices.resize(static_cast<std::size_t>(s.slices));

    struct Job {
        int slice;
        int fold;
    };
    std::vector<Job> jobs;
    for (int i = 0; i < s.slices; ++i)
        for (int f = 0; f < folds; ++f) jobs.push_back({i, f});
    std::vector<FoldOutcome> outcomes(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());

    std::mutex log_mutex;
    auto say = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard<std::mutex> lock(log_mutex);
        log(msg);
    };

    auto run_job = [&](std::size_t j) {
        try {
            outcomes[j] = train_one_fold<T>(scans, plan, s, jobs[j].slice, jobs[j].fold);
            const FoldOutcome& o = outcomes[j];
            std::ostringstream msg;
            msg << "slice " << jobs[j].slice << " fold " << jobs[j].fold;
            if (o.failed)
                msg << " failed: " << o.failure;
            else
                msg << " best val acc " << o.best_val_accuracy << " at epoch " << o.best_epoch;
            say(msg.str());
        } catch (...) {
            errors[j] = std::current_exception();
        }
    };

    int workers = std::max(1, std::min<int>(s.jobs, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) run_job(j);
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        SliceResult& slice = set.slices[static_cast<std::size_t>(jobs[j].slice)];
        slice.slice_index = jobs[j].slice;
        slice.folds.push_back(std::move(outcomes[j]));
    }
    for (auto& slice : set.slices) select_best_fold(slice);
    return set;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation

struct PredictionRecord {
    std::string subject_id;
    std::string scan_id;
    std::vector<double> slice_probabilities;  // class-1 probability per slice model
    double ensemble_probability = 0.0;        // mean, the ROC score
    int ensemble_label = 0;                   // majority vote
    int true_label = 0;
};

struct EnsemblePredictions {
    std::vector<PredictionRecord> records;
    std::size_t skipped_scans = 0;  // scans missing at least one slice
};

// Scores every task scan: per slice model a batched forward pass, then the
// vote. Scans lacking the full slice complement are tallied and skipped.
template <class T>
EnsemblePredictions ensemble_predict_all(std::vector<BotNetModel<T>>& models, const std::vector<ScanSlices>& scans,
                                         TaskKind task, std::size_t batch_size = 32) {
    if (models.empty()) throw std::invalid_argument("ensemble needs at least one model");
    NoGradGuard guard;
    EnsemblePredictions out;
    std::vector<const ScanSlices*> usable;
    for (const auto& scan : scans) {
        if (!task_label(task, scan.label)) continue;
        if (scan.slices.size() < models.size()) {
            out.skipped_scans += 1;
            continue;
        }
        usable.push_back(&scan);
    }
    if (usable.empty()) return out;

    std::vector<std::vector<double>> probs(usable.size(), std::vector<double>(models.size(), 0.0));
    for (std::size_t m = 0; m < models.size(); ++m) {
        std::size_t input_size = models[m].config.input_size;
        for (std::size_t at = 0; at < usable.size(); at += batch_size) {
            std::size_t n = std::min(batch_size, usable.size() - at);
            std::vector<SliceSample> batch(n);
            std::vector<const SliceSample*> items;
            for (std::size_t i = 0; i < n; ++i) {
                batch[i].pixels = usable[at + i]->slices[m];
                items.push_back(&batch[i]);
            }
            Tensor<T> logits = forward(models[m], detail::slice_batch<T>(items, input_size), BnMode::eval);
            Tensor<T> p = softmax(logits, 1);
            for (std::size_t i = 0; i < n; ++i)
                probs[at + i][m] = static_cast<double>(p.data()[i * p.size(1) + 1]);
        }
    }

    for (std::size_t i = 0; i < usable.size(); ++i) {
        PredictionRecord rec;
        rec.subject_id = usable[i]->subject_id;
        rec.scan_id = usable[i]->scan_id;
        rec.slice_probabilities = probs[i];
        std::vector<int> labels;
        for (double pr : probs[i]) labels.push_back(pr > 0.5 ? 1 : 0);
        VoteResult vote = majority_vote(labels, probs[i]);
        rec.ensemble_label = vote.label;
        rec.ensemble_probability = vote.mean_probability;
        rec.true_label = *task_label(task, usable[i]->label);
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Majority over a subject's scan labels, ties broken by the mean of the scan
// ensemble probabilities; a subject counts as correct when that matches its
// (necessarily consistent) true label.
inline double subject_level_accuracy(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw std::invalid_argument("subject accuracy needs at least one record");
    struct Group {
        std::vector<int> labels;
        std::vector<double> probs;
        int truth = -1;
    };
    std::map<std::string, Group> groups;
    for (const auto& rec : records) {
        Group& g = groups[rec.subject_id];
        g.labels.push_back(rec.ensemble_label);
        g.probs.push_back(rec.ensemble_probability);
        if (g.truth >= 0 && g.truth != rec.true_label)
            throw std::logic_error("subject " + rec.subject_id + " has scans with conflicting true labels");
        g.truth = rec.true_label;
    }
    std::size_t correct = 0;
    for (const auto& [subject, g] : groups)
        correct += majority_vote(g.labels, g.probs).label == g.truth ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(groups.size());
}

struct EvalOutputs {
    TaskKind task = TaskKind::ad_vs_cn;
    MetricsReport metrics;  // scan-level, accuracy is the holdout accuracy
    double subject_accuracy = 0.0;
    double validation_accuracy = 0.0;  // mean of the per-slice best validation accuracies
    std::size_t n_scans = 0;
    std::size_t n_subjects = 0;
    std::size_t skipped_scans = 0;
    std::vector<PredictionRecord> records;
};

// Holdout evaluation: only scans of plan.test_subjects are scored.
template <class T>
EvalOutputs evaluate_ensemble(std::vector<BotNetModel<T>>& models, const std::vector<double>& val_accuracies,
                              const std::vector<ScanSlices>& scans, const SplitPlan& plan,
                              std::size_t batch_size = 32) {
    std::set<std::string> holdout(plan.test_subjects.begin(), plan.test_subjects.end());
    std::vector<ScanSlices> test_scans;
    for (const auto& scan : scans)
        if (holdout.count(scan.subject_id)) test_scans.push_back(scan);

    EvalOutputs out;
    out.task = plan.task;
    EnsemblePredictions preds = ensemble_predict_all(models, test_scans, plan.task, batch_size);
    if (preds.records.empty()) throw std::runtime_error("no holdout scans could be evaluated");
    out.skipped_scans = preds.skipped_scans;
    out.records = std::move(preds.records);

    std::vector<int> labels, truths;
    std::vector<double> scores;
    std::set<std::string> subjects;
    for (const auto& rec : out.records) {
        labels.push_back(rec.ensemble_label);
        truths.push_back(rec.true_label);
        scores.push_back(rec.ensemble_probability);
        subjects.insert(rec.subject_id);
    }
    out.metrics = compute_metrics(labels, truths, scores);
    out.subject_accuracy = subject_level_accuracy(out.records);
    out.n_scans = out.records.size();
    out.n_subjects = subjects.size();
    if (!val_accuracies.empty()) {
        double sum = 0.0;
        for (double v : val_accuracies) sum += v;
        out.validation_accuracy = sum / static_cast<double>(val_accuracies.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifact writers

namespace detail {

inline std::string csv_double(double v) {
    std::ostringstream ss;
    ss.precision(10);
    ss << v;
    return ss.str();
}

}  // namespace detail

inline void write_curves(const SliceModelSet& set, const std::string& out_dir) {
    for (const auto& slice : set.slices) {
        std::filesystem::path dir = std::filesystem::path(out_dir) / "curves" / std::to_string(slice.slice_index);
        std::filesystem::create_directories(dir);
        for (const auto& fold : slice.folds) {
            std::ostringstream csv;
            csv << "epoch,train_loss,train_acc,val_loss,val_acc\n";
            for (const auto& row : fold.curve)
                csv << row.epoch << ',' << detail::csv_double(row.train_loss) << ','
                    << detail::csv_double(row.train_acc) << ',' << detail::csv_double(row.val_loss) << ','
                    << detail::csv_double(row.val_acc) << '\n';
            write_text_file((dir / (std::to_string(fold.fold) + ".csv")).string(), csv.str());
        }
    }
}

inline void write_step_logs(const SliceModelSet& set, const std::string& out_dir) {
    for (const auto& slice : set.slices) {
        std::filesystem::path dir = std::filesystem::path(out_dir) / "steps" / std::to_string(slice.slice_index);
        std::filesystem::create_directories(dir);
        for (const auto& fold : slice.folds) {
            std::ostringstream csv;
            csv << "epoch,step,loss_w,loss_w_plus_eps,grad_norm\n";
            for (const auto& row : fold.steps)
                csv << row.epoch << ',' << row.step << ',' << detail::csv_double(row.loss_w) << ','
                    << detail::csv_double(row.loss_w_plus_eps) << ',' << detail::csv_double(row.grad_norm) << '\n';
            write_text_file((dir / (std::to_string(fold.fold) + ".csv")).string(), csv.str());
        }
    }
}

inline void write_checkpoints(const SliceModelSet& set, const std::string& out_dir) {
    std::filesystem::path dir = std::filesystem::path(out_dir) / "models";
    std::filesystem::create_directories(dir);
    for (const auto& slice : set.slices)
        slice.best.save_file((dir / ("slice" + std::to_string(slice.slice_index) + ".ckpt")).string());
}

inline void write_metrics_json(const EvalOutputs& out, const std::string& path) {
    nlohmann::ordered_json j;
    j["task"] = task_name(out.task);
    j["precision"] = out.metrics.precision;
    j["recall"] = out.metrics.recall;
    j["f1"] = out.metrics.f1;
    j["roc_auc"] = out.metrics.roc_auc;
    j["holdout_accuracy"] = out.metrics.accuracy;          // scan-level
    j["holdout_subject_accuracy"] = out.subject_accuracy;  // subject-level
    j["validation_accuracy"] = out.validation_accuracy;
    j["confusion"] = {{"tp", out.metrics.counts.tp},
                      {"fp", out.metrics.counts.fp},
                      {"tn", out.metrics.counts.tn},
                      {"fn", out.metrics.counts.fn}};
    j["defaulted"] = {{"precision", out.metrics.precision_defaulted},
                      {"recall", out.metrics.recall_defaulted},
                      {"f1", out.metrics.f1_defaulted}};
    j["n_scans"] = out.n_scans;
    j["n_subjects"] = out.n_subjects;
    j["skipped_scans"] = out.skipped_scans;
    write_text_file(path, j.dump(2) + "\n");
}

inline void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path) {
    std::ostringstream csv;
    csv << "fpr,tpr,threshold\n";
    for (const auto& p : points)
        csv << detail::csv_double(p.fpr) << ',' << detail::csv_double(p.tpr) << ','
            << detail::csv_double(p.threshold) << '\n';
    write_text_file(path, csv.str());
}

inline void write_predictions_csv(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ostringstream csv;
    csv << "subject_id,scan_id,true_label,ensemble_label,ensemble_prob";
    std::size_t slices = records.empty() ? 0 : records[0].slice_probabilities.size();
    for (std::size_t i = 0; i < slices; ++i) csv << ",slice_prob_" << i;
    csv << '\n';
    for (const auto& rec : records) {
        csv << rec.subject_id << ',' << rec.scan_id << ',' << rec.true_label << ',' << rec.ensemble_label << ','
            << detail::csv_double(rec.ensemble_probability);
        for (double p : rec.slice_probabilities) csv << ',' << detail::csv_double(p);
        csv << '\n';
    }
    write_text_file(path, csv.str());
}

}  // namespace botkit
