#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udaqa/tensor.hpp"

namespace udaqa {

enum class ScoringRule { mtl_middle3, mean, final_only };

std::string scoring_rule_name(ScoringRule r);
ScoringRule scoring_rule_from_name(const std::string& s);

// Sum of the middle three of the sorted scores (for 7 judges: 3rd..5th).
double middle3_sum(std::vector<double> scores);

struct FeatureSample {
    std::string id;
    Tensor clip_features;                  // [K x M]
    std::optional<Tensor> video_feature;   // [N]
    std::vector<double> judge_scores;      // raw score units
    double difficulty = 1.0;
    double final_score = 0.0;
    std::string action;
    std::string split;                     // "", "train", "val", "test", "fold<i>"
    double ambiguity = 0.0;                // synthetic only: injected sigma_a
    double quality = 0.0;                  // synthetic only: latent quality q
};

struct ScoreRange {
    double judge_min = 0.0, judge_max = 10.0;
    double final_min = 0.0, final_max = 100.0;
};

struct Manifest {
    int version = 1;
    std::size_t K = 0, M = 0, N = 0;
    bool has_video_feature = false;
    ScoringRule rule = ScoringRule::mean;
    std::map<std::string, ScoreRange> actions;
};

struct Dataset {
    Manifest manifest;
    std::vector<FeatureSample> samples;

    std::vector<const FeatureSample*> split(const std::string& name) const;
    const ScoreRange& range_of(const std::string& action) const;
};

struct SyntheticSpec {
    std::size_t count = 1000;
    std::size_t K = 10, M = 64, N = 32;
    std::size_t judges = 7;
    double sigma_lo = 0.1, sigma_hi = 1.0;
    double difficulty_lo = 2.8, difficulty_hi = 3.2;
    std::uint64_t seed = 7;
};

// Writes manifest.json plus features/<id>.bin under out_dir. Byte-identical
// for identical specs.
void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_manifest(const Dataset& ds, const std::filesystem::path& manifest_path);

// y <-> [0, 1] against a declared range.
double to_unit(double y, double y_min, double y_max);
double from_unit(double y, double y_min, double y_max);

enum class NormalizeDirection { to_unit, from_unit };
// Transforms judge scores against the judge range and final scores against
// the final range, in place.
void normalize_scores(Dataset& ds, NormalizeDirection dir);

// Lift a single judge-scale score to the final-score scale under the
// dataset's rule (all judges assumed equal to the prediction).
double lift_to_final(double judge_score, double difficulty, ScoringRule rule,
                     std::size_t judges);

struct SplitSpec {
    enum class Scheme { fixed_fraction, k_fold } scheme = Scheme::fixed_fraction;
    double train_fraction = 0.6, val_fraction = 0.2;  // remainder is test
    std::size_t folds = 4;
    std::uint64_t seed = 0;
};

// Deterministic assignment written into the samples' split fields.
void split_dataset(Dataset& ds, const SplitSpec& spec);

}  // namespace udaqa
