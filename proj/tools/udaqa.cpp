#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "udaqa/checkpoint.hpp"
#include "udaqa/dataset.hpp"
#include "udaqa/errors.hpp"
#include "udaqa/metrics.hpp"
#include "udaqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace udaqa;

namespace {

bool verbose() {
    const char* v = std::getenv("UDAQA_LOG");
    return v && (std::string_view(v) == "debug" || std::string_view(v) == "verbose");
}

void log_line(const std::string& msg) {
    if (verbose()) std::cerr << "[udaqa] " << msg << "\n";
}

// Write-then-rename so a failed run leaves no partial artifact.
void write_text_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw DataError("cannot write " + tmp.string());
        os << content;
        os.close();
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<const FeatureSample*> pick_samples(const Dataset& ds, const std::string& split,
                                               const std::vector<std::string>& ids) {
    if (!ids.empty()) {
        std::vector<const FeatureSample*> out;
        for (const std::string& id : ids) {
            auto it = std::find_if(ds.samples.begin(), ds.samples.end(),
                                   [&](const FeatureSample& s) { return s.id == id; });
            if (it == ds.samples.end()) throw DataError("unknown sample id '" + id + "'");
            out.push_back(&*it);
        }
        return out;
    }
    auto out = ds.split(split);
    if (out.empty()) throw DataError("split '" + split + "' is empty");
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

int run(int argc, char** argv) {
    CLI::App app{"UD-AQA: uncertainty-driven action quality assessment"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML config file");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic feature dataset");
    SyntheticSpec spec;
    std::string gen_out;
    double train_fraction = 0.6, val_fraction = 0.2;
    std::size_t folds = 0;
    std::uint64_t split_seed = 0;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", spec.count, "Sample count");
    gen->add_option("--clips", spec.K, "Clips per video (K)");
    gen->add_option("--clip-dim", spec.M, "Clip feature width (M)");
    gen->add_option("--video-dim", spec.N, "CVAE feature width (N)");
    gen->add_option("--judges", spec.judges, "Judge scores per sample");
    gen->add_option("--sigma-lo", spec.sigma_lo, "Ambiguity lower bound");
    gen->add_option("--sigma-hi", spec.sigma_hi, "Ambiguity upper bound");
    gen->add_option("--difficulty-lo", spec.difficulty_lo, "Difficulty lower bound");
    gen->add_option("--difficulty-hi", spec.difficulty_hi, "Difficulty upper bound");
    gen->add_option("--seed", spec.seed, "Generator seed");
    gen->add_option("--train-fraction", train_fraction, "Training split fraction");
    gen->add_option("--val-fraction", val_fraction, "Validation split fraction");
    gen->add_option("--folds", folds, "Use k-fold splits instead of fractions");
    gen->add_option("--split-seed", split_seed, "Split assignment seed");

    // shared train/eval/predict/report options
    std::string data_path, checkpoint_path, out_path, split_name = "test";
    std::vector<std::string> ids;
    int t_samples = 7;
    std::uint64_t run_seed = 0;

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a feature dataset");
    TrainConfig cfg;
    std::string log_path;
    bool no_wa = false, no_cvae = false, no_reweight = false, no_curriculum = false;
    tr->add_option("--data", data_path, "Dataset manifest path")->required();
    tr->add_option("--out", checkpoint_path, "Checkpoint output path")->required();
    tr->add_option("--log", log_path, "Epoch log output path (JSON lines)");
    tr->add_option("--lr", cfg.learning_rate, "Learning rate");
    tr->add_option("--weight-decay", cfg.weight_decay, "Adam weight decay");
    tr->add_option("--alpha", cfg.alpha, "Latent loss weight");
    tr->add_option("--beta", cfg.beta, "Uncertainty loss weight");
    tr->add_option("--epochs", cfg.epochs, "Maximum epochs");
    tr->add_option("--batch-size", cfg.batch_size, "Minibatch size");
    tr->add_option("--latent-dim", cfg.dims.D, "Latent dimension D");
    tr->add_option("--seed", cfg.seed, "Training seed");
    tr->add_option("--p", cfg.curriculum.start_percent, "Curriculum starting percentage");
    tr->add_option("--a", cfg.curriculum.step_percent, "Curriculum step percentage");
    tr->add_option("--patience", cfg.curriculum.patience, "Stage convergence patience");
    tr->add_option("--t-eval", cfg.t_eval, "Stochastic samples kept for evaluation");
    tr->add_option("--train-split", cfg.train_split, "Training split name");
    tr->add_option("--val-split", cfg.val_split, "Validation split name");
    tr->add_flag("--no-wa", no_wa, "Mean-pool clips instead of weight attention");
    tr->add_flag("--no-cvae", no_cvae, "Drop the CVAE latent path");
    tr->add_flag("--no-reweight", no_reweight, "Plain regression loss, no uncertainty terms");
    tr->add_flag("--no-curriculum", no_curriculum, "Train on the full set every epoch");
    tr->add_flag("--squared-error", cfg.squared_error, "Squared distance in the AQA loss");
    tr->add_flag("--shuffle-within-stage", cfg.shuffle_within_stage,
                 "Shuffle the active subset instead of strict uncertainty order");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--data", data_path, "Dataset manifest path")->required();
    ev->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
    ev->add_option("--split", split_name, "Split to evaluate");
    ev->add_option("--samples", t_samples, "Stochastic scores per sample (t)");
    ev->add_option("--seed", run_seed, "Noise seed");
    ev->add_option("--out", out_path, "Metrics output path (JSON)");

    // predict
    auto* pr = app.add_subcommand("predict", "Emit multi-score predictions");
    pr->add_option("--data", data_path, "Dataset manifest path")->required();
    pr->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
    pr->add_option("--split", split_name, "Split to predict on");
    pr->add_option("--ids", ids, "Specific sample ids")->delimiter(',');
    pr->add_option("--samples", t_samples, "Stochastic scores per sample (t)");
    pr->add_option("--seed", run_seed, "Noise seed");
    pr->add_option("--out", out_path, "Prediction table output path (TSV)");

    // report
    auto* rp = app.add_subcommand("report", "Ranking table of predictions vs labels");
    rp->add_option("--data", data_path, "Dataset manifest path")->required();
    rp->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
    rp->add_option("--split", split_name, "Split to report on");
    rp->add_option("--samples", t_samples, "Stochastic scores per sample (t)");
    rp->add_option("--seed", run_seed, "Noise seed");
    rp->add_option("--out", out_path, "Report output path (TSV)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (gen->parsed()) {
        log_line("generating " + std::to_string(spec.count) + " samples into " + gen_out);
        generate_synthetic(spec, gen_out);
        Dataset ds = load_dataset(fs::path(gen_out) / "manifest.json");
        SplitSpec ss;
        if (folds > 0) {
            ss.scheme = SplitSpec::Scheme::k_fold;
            ss.folds = folds;
        } else {
            ss.train_fraction = train_fraction;
            ss.val_fraction = val_fraction;
        }
        ss.seed = split_seed;
        split_dataset(ds, ss);
        save_manifest(ds, fs::path(gen_out) / "manifest.json");
        std::cout << "wrote " << (fs::path(gen_out) / "manifest.json").string() << " ("
                  << ds.samples.size() << " samples)\n";
        return 0;
    }

    if (tr->parsed()) {
        cfg.ablations.wa = !no_wa;
        cfg.ablations.cvae = !no_cvae;
        cfg.ablations.reweight = !no_reweight;
        cfg.ablations.curriculum = !no_curriculum;
        Dataset ds = load_dataset(data_path);
        std::ostringstream log_buf;
        log_line("training on " + data_path);
        TrainResult res = train(ds, cfg, &log_buf);
        if (!log_path.empty()) write_text_atomic(log_path, log_buf.str());
        save_model(res.params, ds.manifest, checkpoint_path);
        std::cout << "best val spearman " << format_double(res.best_val_spearman) << " at epoch "
                  << res.best_epoch << " (" << res.log.size() << " epochs)\n";
        std::cout << "wrote " << checkpoint_path << "\n";
        return 0;
    }

    Dataset ds = load_dataset(data_path);
    ModelParams params = load_model(checkpoint_path);
    if (params.dims.M != ds.manifest.M || params.dims.K != ds.manifest.K)
        throw DataError("checkpoint dimensions do not match the dataset");
    auto samples = pick_samples(ds, split_name, ev->parsed() ? std::vector<std::string>{} : ids);

    if (ev->parsed()) {
        MetricsBundle b = evaluate(samples, ds.manifest, params, t_samples, run_seed);
        json out;
        out["split"] = split_name;
        out["count"] = samples.size();
        out["spearman"] = std::isfinite(b.spearman) ? json(b.spearman) : json();
        out["relative_l2_x100"] = b.relative_l2 * 100.0;
        out["mean_u"] = b.mean_u;
        if (b.per_action_spearman.size() > 1) {
            for (const auto& [a, r] : b.per_action_spearman)
                out["per_action_spearman"][a] = std::isfinite(r) ? json(r) : json();
            out["fisher_z_average"] = b.fisher_average;
        }
        std::string text = out.dump(2) + "\n";
        std::cout << text;
        if (!out_path.empty()) write_text_atomic(out_path, text);
        return 0;
    }

    if (pr->parsed()) {
        const char kSep = '\t';
        std::ostringstream os;
        os << "id" << kSep << "u" << kSep << "deterministic";
        for (int i = 1; i <= t_samples; ++i) os << kSep << "sample" << i;
        os << "\n";
        for (const FeatureSample* s : samples) {
            const ScoreRange& r = ds.range_of(s->action);
            PredictionSet ps = predict_scores(*s, params, t_samples, run_seed);
            os << ps.sample_id << kSep << format_double(ps.log_uncertainty) << kSep
               << format_double(from_unit(ps.deterministic_score, r.judge_min, r.judge_max));
            for (double v : ps.sampled_scores)
                os << kSep << format_double(from_unit(v, r.judge_min, r.judge_max));
            os << "\n";
        }
        std::cout << os.str();
        if (!out_path.empty()) write_text_atomic(out_path, os.str());
        return 0;
    }

    // report: tabular ranking, label vs predicted
    MetricsBundle b = evaluate(samples, ds.manifest, params, t_samples, run_seed);
    std::vector<double> label_rank = fractional_ranks(b.final_labels);
    std::vector<double> pred_rank = fractional_ranks(b.final_predictions);
    const char kSep = '\t';
    std::ostringstream os;
    os << "id" << kSep << "final_score" << kSep << "label_rank" << kSep << "predicted_score"
       << kSep << "predicted_rank" << kSep << "u" << kSep << "sampled_scores\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const PredictionSet& ps = b.predictions[i];
        const ScoreRange& r = ds.range_of(samples[i]->action);
        os << ps.sample_id << kSep << format_double(b.final_labels[i]) << kSep
           << label_rank[i] << kSep << format_double(b.final_predictions[i]) << kSep
           << pred_rank[i] << kSep << format_double(ps.log_uncertainty) << kSep;
        for (std::size_t j = 0; j < ps.sampled_scores.size(); ++j) {
            if (j) os << ",";
            os << format_double(from_unit(ps.sampled_scores[j], r.judge_min, r.judge_max));
        }
        os << "\n";
    }
    std::cout << os.str();
    if (!out_path.empty()) write_text_atomic(out_path, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
