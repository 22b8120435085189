#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kinship/parameters.hpp"
#include "kinship/tensor.hpp"

namespace kinship {

struct StageConfig {
  std::size_t patch_size = 1;       // spatial downsampling at stage entry
  std::size_t embed_dim = 1;        // channels C_i
  std::size_t num_heads = 1;        // N_i; head width = embed_dim / num_heads
  std::size_t reduction_ratio = 1;  // R_i; keys/values shrink R_i^2-fold
  std::size_t depth = 1;            // encoder layers L_i
  std::size_t mlp_ratio = 4;        // FFN hidden width = mlp_ratio * embed_dim
};

struct PVTConfig {
  std::string name = "custom";
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::vector<StageConfig> stages;
  std::uint64_t seed = 0;
  double init_std = 0.02;
  double norm_eps = 1e-6;

  // Length of the pooled feature vector, i.e. the last stage's embed_dim.
  std::size_t feature_dim() const;
};

/// Throws ConfigError unless every stage is realizable on the input grid:
/// patch sizes divide the running grid, R_i divides the stage grid and
/// embed_dim is divisible by num_heads.
void validate(const PVTConfig& config);

// Desk-scale default: 32x32x1 input, two stages, C = {32, 64}.
PVTConfig pvt_nano();
// Published PVT-Tiny dimensions (224x224x3, C = {64, 128, 320, 512}).
PVTConfig pvt_tiny();
// Same architecture with PVT-v2-b0 widths; v2 internals are not modelled.
PVTConfig pvt_v2_b0();
// "nano", "tiny" or "v2-b0"; throws ConfigError otherwise.
PVTConfig pvt_preset(std::string_view name);

struct GridShape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t tokens() const { return height * width; }
};

struct SpatialReduceParams {
  LinearParams projection;            // [(R^2 C) x C]
  std::optional<LayerNormParams> norm;  // absent: no normalization
  double norm_eps = 1e-6;
};

struct SRAParams {
  Tensor query;  // [C x C]
  Tensor key;    // [C x C]
  Tensor value;  // [C x C]
  // Present iff the stage's reduction ratio exceeds 1.
  std::optional<SpatialReduceParams> reduce;
  LinearParams output;  // [C x C]
};

struct EncoderLayerParams {
  LayerNormParams attn_norm;
  SRAParams attn;
  LayerNormParams ffn_norm;
  LinearParams ffn_in;   // [C x mlp_ratio*C]
  LinearParams ffn_out;  // [mlp_ratio*C x C]
};

struct StageParams {
  LinearParams patch_projection;  // [(p^2 c_in) x C]
  Tensor position;                // [tokens x C]
  std::vector<EncoderLayerParams> layers;
};

/// Splits an [H x W x c] grid into non-overlapping p x p patches, flattens
/// each patch in (row, column, channel) order, projects it and adds the
/// positional embedding. Returns [(H/p * W/p) x C].
Tensor patch_embed(Tape& tape, const Tensor& image, std::size_t patch_size, const LinearParams& projection,
                   const Tensor& position);

/// Reduce(x) = Norm(Reshape(x, R) W_S): groups every R x R block of the
/// token grid into one row of width R^2 C, projects back to C and
/// normalizes. [(H W) x C] -> [(H W / R^2) x C].
Tensor spatial_reduce(Tape& tape, const Tensor& tokens, GridShape grid, std::size_t ratio,
                      const SpatialReduceParams& params);

/// Multi-head attention whose keys and values come from the spatially
/// reduced `kv_in`. Queries keep their length; each head attends with
/// softmax(q k^T / sqrt(d_head)) v, heads are concatenated and projected.
/// When `attention` is non-null it receives the per-head score matrices.
Tensor sra_attention(Tape& tape, const Tensor& q_in, const Tensor& kv_in, GridShape kv_grid,
                     const SRAParams& params, std::size_t num_heads, std::size_t ratio,
                     std::vector<Tensor>* attention = nullptr);

/// Pre-norm encoder layer: x + SRA(LN(x)), then x + FFN(LN(x)) with a
/// GELU feed-forward block.
Tensor encoder_layer(Tape& tape, const Tensor& x, GridShape grid, const EncoderLayerParams& params,
                     const StageConfig& stage, double norm_eps);

class PVTModel {
 public:
  // Validates the config and draws all parameters from config.seed.
  explicit PVTModel(PVTConfig config);

  const PVTConfig& config() const { return config_; }
  const std::vector<StageParams>& stages() const { return stages_; }
  const LayerNormParams& final_norm() const { return final_norm_; }
  const ParameterSet& parameters() const { return parameters_; }
  ParameterSet& parameters() { return parameters_; }

  // Token grid of each stage after its patch embedding.
  std::vector<GridShape> stage_grids() const;

  /// Image [H x W x c] -> feature vector [D]. `stage_outputs`, when given,
  /// receives each stage's output token sequence.
  Tensor forward(Tape& tape, const Tensor& image, std::vector<Tensor>* stage_outputs = nullptr) const;

 private:
  PVTConfig config_;
  std::vector<StageParams> stages_;
  LayerNormParams final_norm_;
  ParameterSet parameters_;
};

inline Tensor pvt_forward(Tape& tape, const PVTModel& model, const Tensor& image) {
  return model.forward(tape, image);
}

}  // namespace kinship
