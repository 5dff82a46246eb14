#pragma once

#include <filesystem>

#include "udaqa/dataset.hpp"
#include "udaqa/model.hpp"

namespace udaqa {

// Binary parameter file plus a JSON sidecar at <path>.json describing
// widths, dimensions, ablations and the score-normalization ranges.
void save_model(const ModelParams& params, const Manifest& manifest,
                const std::filesystem::path& path);

ModelParams load_model(const std::filesystem::path& path);

}  // namespace udaqa
