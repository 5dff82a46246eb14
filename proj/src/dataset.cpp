#include "udaqa/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "udaqa/errors.hpp"
#include "udaqa/rng.hpp"

namespace udaqa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string scoring_rule_name(ScoringRule r) {
    switch (r) {
        case ScoringRule::mtl_middle3: return "mtl_middle3";
        case ScoringRule::mean: return "mean";
        case ScoringRule::final_only: return "final_only";
    }
    return "?";
}

ScoringRule scoring_rule_from_name(const std::string& s) {
    if (s == "mtl_middle3") return ScoringRule::mtl_middle3;
    if (s == "mean") return ScoringRule::mean;
    if (s == "final_only") return ScoringRule::final_only;
    throw DataError("manifest: unknown scoring rule '" + s + "'");
}

double middle3_sum(std::vector<double> scores) {
    if (scores.size() < 5)
        throw std::invalid_argument("middle3_sum: need at least 5 scores");
    std::sort(scores.begin(), scores.end());
    std::size_t start = (scores.size() - 3) / 2;
    return scores[start] + scores[start + 1] + scores[start + 2];
}

std::vector<const FeatureSample*> Dataset::split(const std::string& name) const {
    std::vector<const FeatureSample*> out;
    for (const FeatureSample& s : samples)
        if (s.split == name) out.push_back(&s);
    return out;
}

const ScoreRange& Dataset::range_of(const std::string& action) const {
    auto it = manifest.actions.find(action);
    if (it == manifest.actions.end())
        throw DataError("dataset: no score range for action '" + action + "'");
    return it->second;
}

double to_unit(double y, double y_min, double y_max) {
    if (!(y_max > y_min)) throw std::invalid_argument("to_unit: degenerate score range");
    return (y - y_min) / (y_max - y_min);
}

double from_unit(double y, double y_min, double y_max) {
    if (!(y_max > y_min)) throw std::invalid_argument("from_unit: degenerate score range");
    return y_min + y * (y_max - y_min);
}

void normalize_scores(Dataset& ds, NormalizeDirection dir) {
    for (FeatureSample& s : ds.samples) {
        const ScoreRange& r = ds.range_of(s.action);
        auto j = [&](double y) {
            return dir == NormalizeDirection::to_unit ? to_unit(y, r.judge_min, r.judge_max)
                                                      : from_unit(y, r.judge_min, r.judge_max);
        };
        auto f = [&](double y) {
            return dir == NormalizeDirection::to_unit ? to_unit(y, r.final_min, r.final_max)
                                                      : from_unit(y, r.final_min, r.final_max);
        };
        for (double& v : s.judge_scores) v = j(v);
        s.final_score = f(s.final_score);
    }
}

double lift_to_final(double judge_score, double difficulty, ScoringRule rule,
                     std::size_t judges) {
    switch (rule) {
        case ScoringRule::mtl_middle3:
            return judges >= 5 ? 3.0 * judge_score * difficulty : judge_score * difficulty;
        case ScoringRule::mean:
            return judge_score * difficulty;
        case ScoringRule::final_only:
            return judge_score;
    }
    return judge_score;
}

namespace {

void write_f32(std::ostream& os, double v) {
    auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

double read_f32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("feature file: truncated");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(u));
}

std::string sample_id(std::size_t i) {
    std::ostringstream os;
    os << "s" << std::setw(5) << std::setfill('0') << i;
    return os.str();
}

}  // namespace

void generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
    if (spec.count == 0 || spec.K == 0 || spec.M == 0 || spec.N == 0 || spec.judges == 0)
        throw std::invalid_argument("generate_synthetic: counts must be positive");
    if (spec.sigma_lo < 0.0 || spec.sigma_hi < spec.sigma_lo)
        throw std::invalid_argument("generate_synthetic: bad ambiguity range");
    std::error_code ec;
    fs::create_directories(out_dir / "features", ec);
    if (ec) throw DataError("generate_synthetic: cannot create " + out_dir.string());

    Rng rng(spec.seed);
    // Fixed affine embeddings: clips from (q + per-clip jitter, sigma_a), the
    // video feature from (q, sigma_a). Drawn once so features are a linear
    // readout of the latent signals; the jitter rides on q itself, so clip
    // features alone carry an irreducibly noisy quality estimate while the
    // video feature stays clean.
    std::vector<double> A(spec.M * 2), c(spec.M), B(spec.N * 2), d(spec.N);
    for (double& v : A) v = rng.normal();
    for (double& v : c) v = 0.1 * rng.normal();
    for (double& v : B) v = rng.normal();
    for (double& v : d) v = 0.1 * rng.normal();

    ScoringRule rule = spec.judges >= 5 ? ScoringRule::mtl_middle3 : ScoringRule::mean;
    // Judge scale chosen so the ambiguity range is a meaningful fraction of
    // the score range: judge disagreement must remain visible in normalized
    // residuals, not vanish as sub-percent noise.
    double judge_max = 4.0;
    double final_max = (rule == ScoringRule::mtl_middle3 ? 3.0 : 1.0) * judge_max *
                       spec.difficulty_hi;

    json samples = json::array();
    for (std::size_t i = 0; i < spec.count; ++i) {
        std::string id = sample_id(i);
        double q = rng.uniform();
        double sigma = rng.uniform(spec.sigma_lo, spec.sigma_hi);
        double difficulty = rng.uniform(spec.difficulty_lo, spec.difficulty_hi);
        std::vector<double> judges(spec.judges);
        for (double& s : judges)
            s = std::clamp(q * judge_max + sigma * rng.normal(), 0.0, judge_max);
        double final_score = rule == ScoringRule::mtl_middle3
                                 ? middle3_sum(judges) * difficulty
                                 : std::accumulate(judges.begin(), judges.end(), 0.0) /
                                       static_cast<double>(judges.size()) * difficulty;

        fs::path fpath = out_dir / "features" / (id + ".bin");
        std::ofstream os(fpath, std::ios::binary);
        if (!os) throw DataError("generate_synthetic: cannot write " + fpath.string());
        for (std::size_t k = 0; k < spec.K; ++k) {
            double q_k = q + 0.8 * rng.normal();
            for (std::size_t m = 0; m < spec.M; ++m)
                write_f32(os, A[m * 2] * q_k + A[m * 2 + 1] * sigma + c[m]);
        }
        for (std::size_t n = 0; n < spec.N; ++n)
            write_f32(os, B[n * 2] * q + B[n * 2 + 1] * sigma + d[n]);
        os.close();
        if (!os) throw DataError("generate_synthetic: write failed for " + fpath.string());

        json rec;
        rec["id"] = id;
        rec["file"] = "features/" + id + ".bin";
        rec["judge_scores"] = judges;
        rec["difficulty"] = difficulty;
        rec["final_score"] = final_score;
        rec["action"] = "synthetic";
        rec["split"] = "";
        rec["ambiguity"] = sigma;
        rec["quality"] = q;
        samples.push_back(rec);
    }

    json m;
    m["version"] = 1;
    m["K"] = spec.K;
    m["M"] = spec.M;
    m["N"] = spec.N;
    m["has_video_feature"] = true;
    m["scoring_rule"] = scoring_rule_name(rule);
    m["actions"]["synthetic"] = {{"judge_min", 0.0},
                                 {"judge_max", judge_max},
                                 {"final_min", 0.0},
                                 {"final_max", final_max}};
    m["samples"] = samples;

    fs::path tmp = out_dir / "manifest.json.tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw DataError("generate_synthetic: cannot write " + tmp.string());
        os << m.dump(2) << "\n";
    }
    fs::rename(tmp, out_dir / "manifest.json");
}

Dataset load_dataset(const fs::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("load_dataset: cannot open " + manifest_path.string());
    json m;
    try {
        is >> m;
    } catch (const json::exception& e) {
        throw DataError("load_dataset: manifest parse error: " + std::string(e.what()));
    }
    Dataset ds;
    try {
        ds.manifest.version = m.at("version").get<int>();
        if (ds.manifest.version != 1)
            throw DataError("load_dataset: unsupported manifest version " +
                            std::to_string(ds.manifest.version));
        ds.manifest.K = m.at("K").get<std::size_t>();
        ds.manifest.M = m.at("M").get<std::size_t>();
        ds.manifest.N = m.at("N").get<std::size_t>();
        ds.manifest.has_video_feature = m.at("has_video_feature").get<bool>();
        ds.manifest.rule = scoring_rule_from_name(m.at("scoring_rule").get<std::string>());
        for (auto& [name, r] : m.at("actions").items()) {
            ScoreRange sr;
            sr.judge_min = r.at("judge_min").get<double>();
            sr.judge_max = r.at("judge_max").get<double>();
            sr.final_min = r.at("final_min").get<double>();
            sr.final_max = r.at("final_max").get<double>();
            ds.manifest.actions[name] = sr;
        }
        fs::path base = manifest_path.parent_path();
        std::size_t K = ds.manifest.K, M = ds.manifest.M, N = ds.manifest.N;
        std::size_t expected_bytes = 4 * (K * M + (ds.manifest.has_video_feature ? N : 0));
        for (const json& rec : m.at("samples")) {
            FeatureSample s;
            s.id = rec.at("id").get<std::string>();
            s.judge_scores = rec.at("judge_scores").get<std::vector<double>>();
            if (s.judge_scores.empty())
                throw DataError("load_dataset: sample " + s.id + " has no judge scores");
            s.difficulty = rec.at("difficulty").get<double>();
            s.final_score = rec.at("final_score").get<double>();
            s.action = rec.at("action").get<std::string>();
            s.split = rec.value("split", "");
            s.ambiguity = rec.value("ambiguity", 0.0);
            s.quality = rec.value("quality", 0.0);
            if (!ds.manifest.actions.count(s.action))
                throw DataError("load_dataset: sample " + s.id + " references unknown action '" +
                                s.action + "'");

            fs::path fpath = base / rec.at("file").get<std::string>();
            std::error_code ec;
            auto sz = fs::file_size(fpath, ec);
            if (ec) throw DataError("load_dataset: missing feature file " + fpath.string() +
                                    " for sample " + s.id);
            if (sz != expected_bytes)
                throw DataError("load_dataset: feature file " + fpath.string() + " has " +
                                std::to_string(sz) + " bytes, expected " +
                                std::to_string(expected_bytes) + " (sample " + s.id + ")");
            std::ifstream fis(fpath, std::ios::binary);
            s.clip_features = Tensor::zeros({K, M});
            for (double& v : s.clip_features.data) v = read_f32(fis);
            if (ds.manifest.has_video_feature) {
                Tensor vf = Tensor::zeros({N});
                for (double& v : vf.data) v = read_f32(fis);
                s.video_feature = std::move(vf);
            }
            for (double v : s.clip_features.data)
                if (!std::isfinite(v))
                    throw DataError("load_dataset: non-finite feature in sample " + s.id);

            if (ds.manifest.rule == ScoringRule::mtl_middle3 && s.judge_scores.size() >= 5) {
                double expected = middle3_sum(s.judge_scores) * s.difficulty;
                if (std::abs(expected - s.final_score) > 1e-6 * std::max(1.0, std::abs(expected)))
                    throw DataError("load_dataset: sample " + s.id +
                                    " final score inconsistent with middle-3 rule (" +
                                    std::to_string(s.final_score) + " vs " +
                                    std::to_string(expected) + ")");
            }
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw DataError("load_dataset: manifest field error: " + std::string(e.what()));
    }
    return ds;
}

void save_manifest(const Dataset& ds, const fs::path& manifest_path) {
    json m;
    m["version"] = ds.manifest.version;
    m["K"] = ds.manifest.K;
    m["M"] = ds.manifest.M;
    m["N"] = ds.manifest.N;
    m["has_video_feature"] = ds.manifest.has_video_feature;
    m["scoring_rule"] = scoring_rule_name(ds.manifest.rule);
    for (const auto& [name, r] : ds.manifest.actions)
        m["actions"][name] = {{"judge_min", r.judge_min},
                              {"judge_max", r.judge_max},
                              {"final_min", r.final_min},
                              {"final_max", r.final_max}};
    json samples = json::array();
    for (const FeatureSample& s : ds.samples) {
        json rec;
        rec["id"] = s.id;
        rec["file"] = "features/" + s.id + ".bin";
        rec["judge_scores"] = s.judge_scores;
        rec["difficulty"] = s.difficulty;
        rec["final_score"] = s.final_score;
        rec["action"] = s.action;
        rec["split"] = s.split;
        rec["ambiguity"] = s.ambiguity;
        rec["quality"] = s.quality;
        samples.push_back(rec);
    }
    m["samples"] = samples;
    fs::path tmp = manifest_path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw DataError("save_manifest: cannot write " + tmp.string());
        os << m.dump(2) << "\n";
    }
    fs::rename(tmp, manifest_path);
}

void split_dataset(Dataset& ds, const SplitSpec& spec) {
    std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.seed);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);

    if (spec.scheme == SplitSpec::Scheme::k_fold) {
        if (spec.folds == 0 || spec.folds > n)
            throw std::invalid_argument("split_dataset: fold count exceeds dataset size");
        for (std::size_t i = 0; i < n; ++i)
            ds.samples[order[i]].split = "fold" + std::to_string(i % spec.folds);
        return;
    }
    if (spec.train_fraction < 0 || spec.val_fraction < 0 ||
        spec.train_fraction + spec.val_fraction > 1.0)
        throw std::invalid_argument("split_dataset: bad fractions");
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
        std::string& s = ds.samples[order[i]].split;
        if (i < n_train) s = "train";
        else if (i < n_train + n_val) s = "val";
        else s = "test";
    }
}

}  // namespace udaqa
