#include "udaqa/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "udaqa/errors.hpp"

namespace udaqa {

namespace fs = std::filesystem;
using nlohmann::json;

void save_model(const ModelParams& params, const Manifest& manifest, const fs::path& path) {
    std::vector<std::vector<std::size_t>> widths = {
        params.wa_net.widths(),    params.prior_net.widths(), params.posterior_net.widths(),
        params.map_net.widths(),   params.regressor.widths(),
    };
    if (params.x_proj)
        widths.push_back({params.x_proj->in_width(), params.x_proj->out_width()});

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("save_model: cannot write " + tmp.string());
        write_checkpoint(os, widths, params.flatten());
        os.close();
        if (!os) throw DataError("save_model: write failed for " + tmp.string());
    }

    json side;
    side["M"] = params.dims.M;
    side["N"] = params.dims.N;
    side["D"] = params.dims.D;
    side["K"] = params.dims.K;
    side["ablations"] = {{"wa", params.ablations.wa}, {"cvae", params.ablations.cvae}};
    side["has_x_proj"] = params.x_proj.has_value();
    side["scoring_rule"] = scoring_rule_name(manifest.rule);
    for (const auto& [name, r] : manifest.actions)
        side["score_ranges"][name] = {{"judge_min", r.judge_min},
                                      {"judge_max", r.judge_max},
                                      {"final_min", r.final_min},
                                      {"final_max", r.final_max}};
    json nets = json::array();
    const char* names[] = {"wa_net", "prior_net", "posterior_net", "map_net", "regressor",
                           "x_proj"};
    for (std::size_t i = 0; i < widths.size(); ++i)
        nets.push_back({{"name", names[i]}, {"widths", widths[i]}});
    side["nets"] = nets;

    fs::path stmp = path;
    stmp += ".json.tmp";
    {
        std::ofstream os(stmp);
        if (!os) throw DataError("save_model: cannot write " + stmp.string());
        os << side.dump(2) << "\n";
    }
    fs::path sidecar = path;
    sidecar += ".json";
    fs::rename(tmp, path);
    fs::rename(stmp, sidecar);
}

ModelParams load_model(const fs::path& path) {
    fs::path sidecar = path;
    sidecar += ".json";
    std::ifstream sis(sidecar);
    if (!sis) throw DataError("load_model: missing sidecar " + sidecar.string());
    json side;
    try {
        sis >> side;
    } catch (const json::exception& e) {
        throw DataError("load_model: sidecar parse error: " + std::string(e.what()));
    }

    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_model: cannot open " + path.string());
    std::vector<std::vector<std::size_t>> widths;
    std::vector<double> flat;
    read_checkpoint(is, widths, flat);

    bool has_x_proj = side.at("has_x_proj").get<bool>();
    std::size_t expected_nets = 5 + (has_x_proj ? 1 : 0);
    if (widths.size() != expected_nets)
        throw DataError("load_model: checkpoint holds " + std::to_string(widths.size()) +
                        " networks, expected " + std::to_string(expected_nets));

    ModelDims dims;
    dims.M = side.at("M").get<std::size_t>();
    dims.N = side.at("N").get<std::size_t>();
    dims.D = side.at("D").get<std::size_t>();
    dims.K = side.at("K").get<std::size_t>();
    ModelAblations ab;
    ab.wa = side.at("ablations").at("wa").get<bool>();
    ab.cvae = side.at("ablations").at("cvae").get<bool>();

    // Rebuild the layer shapes from the stored widths, then overwrite every
    // value from the flat vector.
    Rng dummy(0);
    ModelParams p;
    p.dims = dims;
    p.ablations = ab;
    p.wa_net = init_mlp(widths[0], dummy);
    p.prior_net = init_mlp(widths[1], dummy);
    p.posterior_net = init_mlp(widths[2], dummy);
    p.map_net = init_mlp(widths[3], dummy);
    p.regressor = init_mlp(widths[4], dummy);
    if (has_x_proj) p.x_proj = init_linear(widths[5][0], widths[5][1], dummy);
    if (flat.size() != p.param_count())
        throw DataError("load_model: parameter count mismatch (" + std::to_string(flat.size()) +
                        " vs " + std::to_string(p.param_count()) + ")");
    p.unflatten(flat);
    return p;
}

}  // namespace udaqa
