#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "udaqa/checkpoint.hpp"
#include "udaqa/dataset.hpp"
#include "udaqa/errors.hpp"
#include "udaqa/metrics.hpp"
#include "udaqa/trainer.hpp"

namespace py = pybind11;
using namespace udaqa;

namespace {

py::dict metrics_to_dict(const MetricsBundle& b) {
    py::dict d;
    d["spearman"] = b.spearman;
    d["relative_l2"] = b.relative_l2;
    d["mean_u"] = b.mean_u;
    d["fisher_z_average"] = b.fisher_average;
    d["per_action_spearman"] = b.per_action_spearman;
    py::list preds;
    for (const PredictionSet& p : b.predictions) {
        py::dict e;
        e["id"] = p.sample_id;
        e["deterministic_score"] = p.deterministic_score;
        e["sampled_scores"] = p.sampled_scores;
        e["log_uncertainty"] = p.log_uncertainty;
        preds.append(e);
    }
    d["predictions"] = preds;
    d["final_predictions"] = b.final_predictions;
    d["final_labels"] = b.final_labels;
    return d;
}

TrainConfig config_from_kwargs(const py::kwargs& kw) {
    TrainConfig cfg;
    for (auto item : kw) {
        auto key = item.first.cast<std::string>();
        if (key == "learning_rate") cfg.learning_rate = item.second.cast<double>();
        else if (key == "weight_decay") cfg.weight_decay = item.second.cast<double>();
        else if (key == "alpha") cfg.alpha = item.second.cast<double>();
        else if (key == "beta") cfg.beta = item.second.cast<double>();
        else if (key == "epochs") cfg.epochs = item.second.cast<int>();
        else if (key == "batch_size") cfg.batch_size = item.second.cast<int>();
        else if (key == "seed") cfg.seed = item.second.cast<std::uint64_t>();
        else if (key == "t_eval") cfg.t_eval = item.second.cast<int>();
        else if (key == "latent_dim") cfg.dims.D = item.second.cast<std::size_t>();
        else if (key == "start_percent") cfg.curriculum.start_percent = item.second.cast<double>();
        else if (key == "step_percent") cfg.curriculum.step_percent = item.second.cast<double>();
        else if (key == "patience") cfg.curriculum.patience = item.second.cast<int>();
        else if (key == "wa") cfg.ablations.wa = item.second.cast<bool>();
        else if (key == "cvae") cfg.ablations.cvae = item.second.cast<bool>();
        else if (key == "reweight") cfg.ablations.reweight = item.second.cast<bool>();
        else if (key == "curriculum") cfg.ablations.curriculum = item.second.cast<bool>();
        else if (key == "squared_error") cfg.squared_error = item.second.cast<bool>();
        else if (key == "shuffle_within_stage") cfg.shuffle_within_stage = item.second.cast<bool>();
        else if (key == "train_split") cfg.train_split = item.second.cast<std::string>();
        else if (key == "val_split") cfg.val_split = item.second.cast<std::string>();
        else throw std::invalid_argument("unknown training option '" + key + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Uncertainty-driven action quality assessment core";

    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");

    m.def("spearman", &spearman, py::arg("predictions"), py::arg("labels"),
          "Spearman's rank correlation with fractional ranks for ties");
    m.def("fisher_z_average", &fisher_z_average, py::arg("rhos"));
    m.def("relative_l2", &relative_l2, py::arg("predictions"), py::arg("labels"),
          py::arg("y_max"), py::arg("y_min"));
    m.def("middle3_sum", &middle3_sum, py::arg("scores"),
          "Sum of the middle three of the sorted judge scores");

    m.def(
        "generate_synthetic",
        [](const std::filesystem::path& out_dir, std::size_t count, std::size_t clips,
           std::size_t clip_dim, std::size_t video_dim, std::size_t judges, double sigma_lo,
           double sigma_hi, double difficulty_lo, double difficulty_hi, std::uint64_t seed,
           double train_fraction, double val_fraction, std::uint64_t split_seed) {
            SyntheticSpec spec;
            spec.count = count;
            spec.K = clips;
            spec.M = clip_dim;
            spec.N = video_dim;
            spec.judges = judges;
            spec.sigma_lo = sigma_lo;
            spec.sigma_hi = sigma_hi;
            spec.difficulty_lo = difficulty_lo;
            spec.difficulty_hi = difficulty_hi;
            spec.seed = seed;
            generate_synthetic(spec, out_dir);
            Dataset ds = load_dataset(out_dir / "manifest.json");
            SplitSpec ss;
            ss.train_fraction = train_fraction;
            ss.val_fraction = val_fraction;
            ss.seed = split_seed;
            split_dataset(ds, ss);
            save_manifest(ds, out_dir / "manifest.json");
            return (out_dir / "manifest.json").string();
        },
        py::arg("out_dir"), py::arg("count") = 1000, py::arg("clips") = 10,
        py::arg("clip_dim") = 64, py::arg("video_dim") = 32, py::arg("judges") = 7,
        py::arg("sigma_lo") = 0.1, py::arg("sigma_hi") = 1.0, py::arg("difficulty_lo") = 2.8,
        py::arg("difficulty_hi") = 3.2, py::arg("seed") = 7, py::arg("train_fraction") = 0.6,
        py::arg("val_fraction") = 0.2, py::arg("split_seed") = 0,
        "Write a seeded synthetic multi-judge dataset and return the manifest path");

    m.def(
        "train",
        [](const std::filesystem::path& manifest, const std::filesystem::path& checkpoint_out,
           const py::kwargs& kw) {
            Dataset ds = load_dataset(manifest);
            TrainConfig cfg = config_from_kwargs(kw);
            std::ostringstream log;
            TrainResult res = train(ds, cfg, &log);
            save_model(res.params, ds.manifest, checkpoint_out);
            py::dict d;
            d["best_val_spearman"] = res.best_val_spearman;
            d["best_epoch"] = res.best_epoch;
            d["epochs_run"] = res.log.size();
            d["epoch_log"] = log.str();
            return d;
        },
        py::arg("manifest"), py::arg("checkpoint_out"),
        "Train on a dataset manifest; extra keyword arguments override TrainConfig fields");

    m.def(
        "evaluate",
        [](const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
           const std::string& split, int t, std::uint64_t seed) {
            Dataset ds = load_dataset(manifest);
            ModelParams params = load_model(checkpoint);
            auto samples = ds.split(split);
            if (samples.empty()) throw DataError("split '" + split + "' is empty");
            return metrics_to_dict(evaluate(samples, ds.manifest, params, t, seed));
        },
        py::arg("manifest"), py::arg("checkpoint"), py::arg("split") = "test",
        py::arg("t") = 7, py::arg("seed") = 0);

    m.def(
        "predict",
        [](const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
           const std::vector<std::string>& ids, int t, std::uint64_t seed) {
            Dataset ds = load_dataset(manifest);
            ModelParams params = load_model(checkpoint);
            py::list out;
            for (const std::string& id : ids) {
                auto it = std::find_if(ds.samples.begin(), ds.samples.end(),
                                       [&](const FeatureSample& s) { return s.id == id; });
                if (it == ds.samples.end()) throw DataError("unknown sample id '" + id + "'");
                const ScoreRange& r = ds.range_of(it->action);
                PredictionSet p = predict_scores(*it, params, t, seed);
                py::dict e;
                e["id"] = p.sample_id;
                e["deterministic_score"] =
                    from_unit(p.deterministic_score, r.judge_min, r.judge_max);
                py::list samples;
                for (double v : p.sampled_scores)
                    samples.append(from_unit(v, r.judge_min, r.judge_max));
                e["sampled_scores"] = samples;
                e["log_uncertainty"] = p.log_uncertainty;
                out.append(e);
            }
            return out;
        },
        py::arg("manifest"), py::arg("checkpoint"), py::arg("ids"), py::arg("t") = 7,
        py::arg("seed") = 0, "Judge-scale multi-score predictions for the given sample ids");
}
