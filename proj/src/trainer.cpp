#include "udaqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "udaqa/errors.hpp"
#include "udaqa/graph.hpp"
#include "udaqa/metrics.hpp"
#include "udaqa/objectives.hpp"

namespace udaqa {

using nlohmann::json;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be nonnegative");
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("config: loss weights must be nonnegative");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (t_eval < 1) throw std::invalid_argument("config: t_eval must be >= 1");
    if (!(curriculum.start_percent > 0.0 && curriculum.start_percent <= 100.0))
        throw std::invalid_argument("config: curriculum start_percent must be in (0, 100]");
    if (!(curriculum.step_percent > 0.0 && curriculum.step_percent <= 100.0))
        throw std::invalid_argument("config: curriculum step_percent must be in (0, 100]");
    if (curriculum.patience < 1) throw std::invalid_argument("config: patience must be >= 1");
}

CurriculumSchedule::CurriculumSchedule(const CurriculumConfig& cfg, bool enabled)
    : cfg_(cfg), enabled_(enabled && cfg.enabled),
      fraction_(enabled && cfg.enabled ? cfg.start_percent : 100.0) {}

bool CurriculumSchedule::observe(double metric) {
    if (std::isfinite(metric) && metric > best_) {
        best_ = metric;
        stale_ = 0;
        return false;
    }
    ++stale_;
    if (stale_ < cfg_.patience) return false;
    if (fraction_ >= 100.0 || !enabled_) {
        converged_ = true;
        return false;
    }
    fraction_ = std::min(100.0, fraction_ + cfg_.step_percent);
    stale_ = 0;
    best_ = -std::numeric_limits<double>::infinity();
    return true;
}

double sample_judge_label(const std::vector<double>& judge_scores, Rng& rng) {
    if (judge_scores.empty())
        throw std::invalid_argument("sample_judge_label: empty score set");
    if (judge_scores.size() == 1) return judge_scores.front();
    return judge_scores[rng.index(judge_scores.size())];
}

std::vector<std::size_t> curriculum_subset(const std::vector<double>& uncertainties,
                                           bool have_uncertainties, double fraction_percent,
                                           std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (!have_uncertainties) return order;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (uncertainties[a] != uncertainties[b]) return uncertainties[a] < uncertainties[b];
        return a < b;
    });
    auto take = static_cast<std::size_t>(
        std::ceil(fraction_percent / 100.0 * static_cast<double>(n)));
    take = std::min(std::max<std::size_t>(take, 1), n);
    order.resize(take);
    return order;
}

namespace {

struct SampleLossNodes {
    Graph::NodeId total;
    double raqa, latent, u_loss, u2;
};

SampleLossNodes build_sample_loss(Graph& g, const ModelNodes& nodes, const FeatureSample& s,
                                  double y_norm, const Tensor& noise, const TrainConfig& cfg) {
    Graph::NodeId clips = g.constant(s.clip_features);
    Graph::NodeId f_v = aggregate_clips(g, clips, nodes, cfg.ablations.wa);
    SampleLossNodes out{};
    if (!cfg.ablations.cvae) {
        Graph::NodeId y_hat = fuse_and_regress(g, f_v, std::nullopt, nodes);
        out.total = plain_aqa_loss(g, y_hat, g.constant(y_norm), cfg.squared_error);
        out.raqa = g.scalar_value(out.total);
        return out;
    }
    Graph::NodeId y = g.constant(y_norm);
    Graph::NodeId x = cvae_input(g, s, clips, nodes);
    GaussianNodes prior = prior_forward(g, x, nodes, cfg.dims.D);
    GaussianNodes posterior = posterior_forward(g, x, y, nodes, cfg.dims.D);
    Graph::NodeId f_u = reparameterize(g, posterior, noise);
    Graph::NodeId y_hat = fuse_and_regress(g, f_v, f_u, nodes);
    Graph::NodeId latent = kl_diag_gaussian(g, posterior, prior);

    Graph::NodeId raqa, u_loss;
    if (cfg.ablations.reweight) {
        Graph::NodeId u1 = map_uncertainty(g, prior.log_variance, nodes);
        Graph::NodeId u2 = map_uncertainty(g, posterior.log_variance, nodes);
        raqa = reweighted_aqa_loss(g, y_hat, y, u2, cfg.squared_error);
        u_loss = uncertainty_alignment_loss(g, u1, u2);
        out.u2 = g.scalar_value(u2);
    } else {
        raqa = plain_aqa_loss(g, y_hat, y, cfg.squared_error);
        u_loss = g.constant(0.0);
        out.u2 = 0.0;
    }
    out.total = total_loss(g, raqa, latent, u_loss, cfg.alpha, cfg.beta);
    out.raqa = g.scalar_value(raqa);
    out.latent = g.scalar_value(latent);
    out.u_loss = g.scalar_value(u_loss);
    return out;
}

double validation_spearman(const std::vector<const FeatureSample*>& val, const Manifest& manifest,
                           const ModelParams& params, std::uint64_t seed) {
    if (val.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    MetricsBundle b = evaluate(val, manifest, params, 1, seed);
    return b.spearman;
}

json epoch_json(const EpochRecord& r) {
    json j;
    j["epoch"] = r.epoch;
    j["active_fraction"] = r.active_fraction;
    j["subset_size"] = r.subset_size;
    j["raqa"] = r.mean_raqa;
    j["latent"] = r.mean_latent;
    j["u_loss"] = r.mean_u_loss;
    j["total"] = r.mean_total;
    j["val_spearman"] = std::isfinite(r.val_spearman) ? json(r.val_spearman) : json();
    j["mean_u"] = r.mean_u;
    j["advanced"] = r.advanced;
    j["subset"] = r.subset;
    j["u_values"] = r.u_values;
    return j;
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg_in, std::ostream* epoch_log) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    cfg.dims.M = ds.manifest.M;
    cfg.dims.N = ds.manifest.N;
    cfg.dims.K = ds.manifest.K;

    std::vector<const FeatureSample*> train_set = ds.split(cfg.train_split);
    std::vector<const FeatureSample*> val_set = ds.split(cfg.val_split);
    if (train_set.empty())
        throw DataError("train: split '" + cfg.train_split + "' is empty");
    std::size_t n = train_set.size();

    ModelAblations mab{cfg.ablations.wa, cfg.ablations.cvae};
    bool needs_x_proj = !ds.manifest.has_video_feature;
    ModelParams params = init_model(cfg.dims, mab, needs_x_proj, cfg.seed);
    std::vector<double> flat = params.flatten();
    std::vector<ParamEntry> layout = params.param_layout();
    AdamState adam;

    Rng label_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng noise_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
    Rng shuffle_rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);

    std::vector<double> last_u(n, 0.0);
    bool have_u = false;
    CurriculumSchedule schedule(cfg.curriculum, cfg.ablations.curriculum);

    TrainResult result;
    result.best_val_spearman = -std::numeric_limits<double>::infinity();
    std::vector<double> best_flat = flat;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double fraction;
        std::vector<std::size_t> subset;
        if (!cfg.ablations.curriculum) {
            fraction = 100.0;
            subset = curriculum_subset({}, false, 100.0, n);
        } else if (!have_u) {
            // first epoch records uncertainties over the full set
            fraction = 100.0;
            subset = curriculum_subset({}, false, 100.0, n);
        } else {
            fraction = schedule.fraction();
            subset = curriculum_subset(last_u, true, fraction, n);
        }
        if (cfg.shuffle_within_stage)
            for (std::size_t i = subset.size(); i > 1; --i)
                std::swap(subset[i - 1], subset[shuffle_rng.index(i)]);

        double sum_raqa = 0, sum_latent = 0, sum_uloss = 0, sum_total = 0, sum_u = 0;
        for (std::size_t start = 0; start < subset.size(); start += cfg.batch_size) {
            std::size_t end = std::min(subset.size(), start + cfg.batch_size);
            params.unflatten(flat);
            Graph g;
            ModelNodes nodes = register_model(g, params, true);
            std::vector<Graph::NodeId> totals;
            for (std::size_t i = start; i < end; ++i) {
                const FeatureSample& s = *train_set[subset[i]];
                const ScoreRange& r = ds.range_of(s.action);
                double y_raw = sample_judge_label(s.judge_scores, label_rng);
                double y_norm = to_unit(y_raw, r.judge_min, r.judge_max);
                Tensor noise = Tensor::zeros({cfg.dims.D});
                for (double& e : noise.data) e = noise_rng.normal();
                SampleLossNodes sl = build_sample_loss(g, nodes, s, y_norm, noise, cfg);
                if (!std::isfinite(g.scalar_value(sl.total)))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", sample " + s.id);
                totals.push_back(sl.total);
                sum_raqa += sl.raqa;
                sum_latent += sl.latent;
                sum_uloss += sl.u_loss;
                sum_total += g.scalar_value(sl.total);
                sum_u += sl.u2;
                if (cfg.ablations.cvae && cfg.ablations.reweight) last_u[subset[i]] = sl.u2;
            }
            Graph::NodeId batch_loss = totals.front();
            for (std::size_t i = 1; i < totals.size(); ++i)
                batch_loss = g.add(batch_loss, totals[i]);
            batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(totals.size()));
            g.backward(batch_loss);
            std::vector<double> grads = collect_model_grads(g, nodes);
            adam_step(flat, grads, adam, cfg.learning_rate, cfg.weight_decay, layout);
        }

        params.unflatten(flat);
        double val_rho = validation_spearman(val_set, ds.manifest, params, cfg.seed);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.active_fraction = fraction;
        rec.subset_size = subset.size();
        double cnt = static_cast<double>(subset.size());
        rec.mean_raqa = sum_raqa / cnt;
        rec.mean_latent = sum_latent / cnt;
        rec.mean_u_loss = sum_uloss / cnt;
        rec.mean_total = sum_total / cnt;
        rec.val_spearman = val_rho;
        rec.mean_u = sum_u / cnt;
        rec.subset = subset;
        rec.u_values = last_u;

        if (std::isfinite(val_rho) && val_rho > result.best_val_spearman) {
            result.best_val_spearman = val_rho;
            best_flat = flat;
            best_epoch = epoch;
        }

        bool stop = false;
        if (cfg.ablations.curriculum) {
            if (!have_u) {
                have_u = true;  // stage epochs start next epoch
            } else {
                rec.advanced = schedule.observe(val_rho);
                stop = schedule.converged();
            }
        }
        result.log.push_back(rec);
        if (epoch_log) *epoch_log << epoch_json(rec).dump() << "\n";
        if (stop) break;
    }

    if (!std::isfinite(result.best_val_spearman)) {
        // no usable validation metric; fall back to the final parameters
        best_flat = flat;
        best_epoch = static_cast<int>(result.log.size());
        result.best_val_spearman = std::numeric_limits<double>::quiet_NaN();
    }
    params.unflatten(best_flat);
    result.params = std::move(params);
    result.best_epoch = best_epoch;
    return result;
}

MetricsBundle evaluate(const std::vector<const FeatureSample*>& split, const Manifest& manifest,
                       const ModelParams& params, int t, std::uint64_t seed) {
    MetricsBundle out;
    std::map<std::string, std::vector<double>> preds_by_action, labels_by_action;
    double rl2_acc = 0.0;
    double u_acc = 0.0;
    for (const FeatureSample* sp : split) {
        const FeatureSample& s = *sp;
        auto it = manifest.actions.find(s.action);
        if (it == manifest.actions.end())
            throw DataError("evaluate: unknown action '" + s.action + "'");
        const ScoreRange& r = it->second;
        PredictionSet ps = predict_scores(s, params, t, seed);
        double judge_pred = from_unit(ps.deterministic_score, r.judge_min, r.judge_max);
        double final_pred =
            lift_to_final(judge_pred, s.difficulty, manifest.rule, s.judge_scores.size());
        out.final_predictions.push_back(final_pred);
        out.final_labels.push_back(s.final_score);
        preds_by_action[s.action].push_back(final_pred);
        labels_by_action[s.action].push_back(s.final_score);
        double d = std::abs(s.final_score - final_pred) / (r.final_max - r.final_min);
        rl2_acc += d * d;
        u_acc += ps.log_uncertainty;
        out.predictions.push_back(std::move(ps));
    }
    std::size_t n = split.size();
    if (n == 0) throw DataError("evaluate: empty split");
    out.relative_l2 = rl2_acc / static_cast<double>(n);
    out.mean_u = u_acc / static_cast<double>(n);
    auto safe_rho = [](const std::vector<double>& p, const std::vector<double>& l) {
        try {
            return spearman(p, l);
        } catch (const std::invalid_argument&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    out.spearman = safe_rho(out.final_predictions, out.final_labels);
    std::vector<double> rhos;
    for (const auto& [action, p] : preds_by_action) {
        double rho = safe_rho(p, labels_by_action[action]);
        out.per_action_spearman[action] = rho;
        if (std::isfinite(rho)) rhos.push_back(std::clamp(rho, -1.0 + 1e-9, 1.0 - 1e-9));
    }
    out.fisher_average = rhos.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : fisher_z_average(rhos);
    return out;
}

}  // namespace udaqa
