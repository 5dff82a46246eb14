#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "udaqa/dataset.hpp"
#include "udaqa/model.hpp"

namespace udaqa {

struct CurriculumConfig {
    bool enabled = true;
    double start_percent = 40.0;
    double step_percent = 20.0;
    int patience = 3;
};

struct TrainAblations {
    bool wa = true;
    bool cvae = true;
    bool reweight = true;  // off: plain distance loss, no uncertainty terms
    bool curriculum = true;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    double alpha = 1.0;
    double beta = 10.0;
    int epochs = 60;
    int batch_size = 8;
    CurriculumConfig curriculum;
    TrainAblations ablations;
    std::uint64_t seed = 0;
    int t_eval = 7;
    ModelDims dims;  // M, N, K are overridden from the dataset manifest
    bool squared_error = false;
    bool shuffle_within_stage = false;
    std::string train_split = "train";
    std::string val_split = "val";

    void validate() const;
};

// Stage gate: the active fraction grows by step_percent once the stage's
// best metric has not improved for `patience` consecutive epochs. Training
// may converge only at 100%.
class CurriculumSchedule {
public:
    CurriculumSchedule(const CurriculumConfig& cfg, bool enabled);

    double fraction() const { return fraction_; }
    int stale() const { return stale_; }
    bool converged() const { return converged_; }
    // End-of-epoch metric; returns true if the stage advanced. NaN counts as
    // no improvement.
    bool observe(double metric);

private:
    CurriculumConfig cfg_;
    bool enabled_;
    double fraction_;
    double best_ = -std::numeric_limits<double>::infinity();
    int stale_ = 0;
    bool converged_ = false;
};

// Uniform draw among the sample's judge scores (already-normalized values
// expected); a single-score sample always yields that score.
double sample_judge_label(const std::vector<double>& judge_scores, Rng& rng);

// Indices of the ceil(fraction% * n) lowest-u samples, ascending by u, ties
// broken by index. Without recorded uncertainties returns 0..n-1 in order.
std::vector<std::size_t> curriculum_subset(const std::vector<double>& uncertainties,
                                           bool have_uncertainties, double fraction_percent,
                                           std::size_t n);

struct EpochRecord {
    int epoch = 0;
    double active_fraction = 100.0;
    std::size_t subset_size = 0;
    double mean_raqa = 0.0;
    double mean_latent = 0.0;
    double mean_u_loss = 0.0;
    double mean_total = 0.0;
    double val_spearman = 0.0;
    double mean_u = 0.0;
    bool advanced = false;
    std::vector<std::size_t> subset;  // indices into the training split
    std::vector<double> u_values;     // per-train-sample u after this epoch
};

struct TrainResult {
    ModelParams params;  // best validation checkpoint
    std::vector<EpochRecord> log;
    double best_val_spearman = 0.0;
    int best_epoch = 0;
};

// Full training procedure. epoch_log, when set, receives one JSON record
// per line per epoch.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, std::ostream* epoch_log = nullptr);

struct MetricsBundle {
    double spearman = 0.0;
    double relative_l2 = 0.0;  // raw (not x100)
    double mean_u = 0.0;
    std::map<std::string, double> per_action_spearman;
    double fisher_average = 0.0;  // only meaningful with > 1 action
    std::vector<PredictionSet> predictions;
    std::vector<double> final_predictions;  // final-score scale
    std::vector<double> final_labels;
};

// Deterministic-score metrics against final-score labels; t stochastic
// scores per sample are attached for reporting. Spearman is NaN when the
// split has fewer than 2 samples.
MetricsBundle evaluate(const std::vector<const FeatureSample*>& split, const Manifest& manifest,
                       const ModelParams& params, int t, std::uint64_t seed);

}  // namespace udaqa
