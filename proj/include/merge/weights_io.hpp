#pragma once

// MRGW container. Layout (all integers little-endian u32, all reals
// little-endian IEEE f64):
//
//   "MRGW" version kind
//   vocab d d_inner n_layers n_heads max_len activation
//   tensor_count
//   tensor_count x { name_len name[name_len] rank dims[rank] data[prod(dims)] }
//
// kind: 0 plain model, 1 merged model (plain tensors plus the folded ones),
// 2 constant attention only. The non-integer config fields travel as tensors
// "config.ln_eps" and "config.quad".

#include <filesystem>
#include <optional>

#include "merge/merge.hpp"

namespace merge {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

enum class WeightFileKind : std::uint32_t { Model = 0, Merged = 1, Calibration = 2 };

struct WeightFile {
  WeightFileKind kind = WeightFileKind::Model;
  ModelConfig cfg;
  std::optional<ModelWeights> weights;  // Model and Merged
  std::optional<MergedModel> merged;    // Merged
  std::optional<ConstantAttention> calibration;  // Calibration and Merged
};

void save_model(const std::filesystem::path& path, const ModelWeights& m);
void save_merged(const std::filesystem::path& path, const ModelWeights& m,
                 const MergedModel& mm);
void save_calibration(const std::filesystem::path& path, const ModelConfig& cfg,
                      const ConstantAttention& ca);

// DataError on a malformed file, ShapeError on inconsistent tensor shapes.
WeightFile load_weight_file(const std::filesystem::path& path);

}  // namespace merge
