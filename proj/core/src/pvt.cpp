#include "kinship/pvt.hpp"

#include <cmath>

#include "kinship/error.hpp"
#include "kinship/ops.hpp"

namespace kinship {

std::size_t PVTConfig::feature_dim() const {
  if (stages.empty()) throw ConfigError("PVT config '" + name + "' has no stages");
  return stages.back().embed_dim;
}

void validate(const PVTConfig& config) {
  if (config.stages.empty()) throw ConfigError("PVT config '" + config.name + "' has no stages");
  if (config.height == 0 || config.width == 0 || config.channels == 0) {
    throw ConfigError("input extents must be positive");
  }
  if (!(config.norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
  std::size_t h = config.height;
  std::size_t w = config.width;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const StageConfig& s = config.stages[i];
    const std::string where = "stage " + std::to_string(i) + ": ";
    if (s.patch_size == 0 || s.embed_dim == 0 || s.num_heads == 0 || s.reduction_ratio == 0 || s.depth == 0 ||
        s.mlp_ratio == 0) {
      throw ConfigError(where + "all stage hyperparameters must be positive");
    }
    if (h % s.patch_size != 0 || w % s.patch_size != 0) {
      throw ConfigError(where + "patch size " + std::to_string(s.patch_size) + " does not divide grid " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    h /= s.patch_size;
    w /= s.patch_size;
    if (s.embed_dim % s.num_heads != 0) {
      throw ConfigError(where + "embed_dim " + std::to_string(s.embed_dim) + " not divisible by " +
                        std::to_string(s.num_heads) + " heads");
    }
    if (h % s.reduction_ratio != 0 || w % s.reduction_ratio != 0) {
      throw ConfigError(where + "reduction ratio " + std::to_string(s.reduction_ratio) + " does not divide grid " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
  }
}

PVTConfig pvt_nano() {
  PVTConfig c;
  c.name = "nano";
  c.height = 32;
  c.width = 32;
  c.channels = 1;
  c.stages = {
      {.patch_size = 4, .embed_dim = 32, .num_heads = 1, .reduction_ratio = 2, .depth = 2, .mlp_ratio = 4},
      {.patch_size = 2, .embed_dim = 64, .num_heads = 2, .reduction_ratio = 1, .depth = 2, .mlp_ratio = 4},
  };
  return c;
}

PVTConfig pvt_tiny() {
  PVTConfig c;
  c.name = "tiny";
  c.height = 224;
  c.width = 224;
  c.channels = 3;
  c.stages = {
      {.patch_size = 4, .embed_dim = 64, .num_heads = 1, .reduction_ratio = 8, .depth = 2, .mlp_ratio = 8},
      {.patch_size = 2, .embed_dim = 128, .num_heads = 2, .reduction_ratio = 4, .depth = 2, .mlp_ratio = 8},
      {.patch_size = 2, .embed_dim = 320, .num_heads = 5, .reduction_ratio = 2, .depth = 2, .mlp_ratio = 4},
      {.patch_size = 2, .embed_dim = 512, .num_heads = 8, .reduction_ratio = 1, .depth = 2, .mlp_ratio = 4},
  };
  return c;
}

PVTConfig pvt_v2_b0() {
  PVTConfig c = pvt_tiny();
  c.name = "v2-b0";
  const std::size_t dims[] = {32, 64, 160, 256};
  for (std::size_t i = 0; i < c.stages.size(); ++i) c.stages[i].embed_dim = dims[i];
  return c;
}

PVTConfig pvt_preset(std::string_view name) {
  if (name == "nano") return pvt_nano();
  if (name == "tiny") return pvt_tiny();
  if (name == "v2-b0") return pvt_v2_b0();
  throw ConfigError("unknown PVT preset '" + std::string(name) + "' (expected nano, tiny or v2-b0)");
}

Tensor patch_embed(Tape& tape, const Tensor& image, std::size_t patch_size, const LinearParams& projection,
                   const Tensor& position) {
  if (image.rank() != 3) throw DimensionError("patch_embed: expected [H x W x c] image, got " + to_string(image.shape()));
  const std::size_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw ConfigError("patch_embed: patch size " + std::to_string(patch_size) + " does not divide " +
                      to_string(image.shape()));
  }
  const std::size_t p = patch_size;
  const std::size_t gh = h / p, gw = w / p;
  Tensor blocks = reshape(tape, image, {gh, p, gw, p, c});
  blocks = permute(tape, blocks, {0, 2, 1, 3, 4});
  Tensor patches = reshape(tape, blocks, {gh * gw, p * p * c});
  Tensor tokens = linear(tape, patches, projection.weight, projection.bias);
  return add(tape, tokens, position);
}

Tensor spatial_reduce(Tape& tape, const Tensor& tokens, GridShape grid, std::size_t ratio,
                      const SpatialReduceParams& params) {
  if (tokens.rank() != 2 || tokens.extent(0) != grid.tokens()) {
    throw DimensionError("spatial_reduce: tokens " + to_string(tokens.shape()) + " do not match grid " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width));
  }
  if (ratio == 0 || grid.height % ratio != 0 || grid.width % ratio != 0) {
    throw ConfigError("spatial_reduce: ratio " + std::to_string(ratio) + " does not divide grid " +
                      std::to_string(grid.height) + "x" + std::to_string(grid.width));
  }
  const std::size_t c = tokens.extent(1);
  const std::size_t r = ratio;
  const std::size_t gh = grid.height / r, gw = grid.width / r;
  Tensor blocks = reshape(tape, tokens, {gh, r, gw, r, c});
  blocks = permute(tape, blocks, {0, 2, 1, 3, 4});
  Tensor grouped = reshape(tape, blocks, {gh * gw, r * r * c});
  Tensor reduced = linear(tape, grouped, params.projection.weight, params.projection.bias);
  if (params.norm) reduced = layer_norm(tape, reduced, params.norm->gain, params.norm->bias, params.norm_eps);
  return reduced;
}

Tensor sra_attention(Tape& tape, const Tensor& q_in, const Tensor& kv_in, GridShape kv_grid,
                     const SRAParams& params, std::size_t num_heads, std::size_t ratio,
                     std::vector<Tensor>* attention) {
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.extent(1) != kv_in.extent(1)) {
    throw DimensionError("sra_attention: query " + to_string(q_in.shape()) + " and key/value " +
                         to_string(kv_in.shape()) + " disagree");
  }
  const std::size_t channels = q_in.extent(1);
  if (num_heads == 0 || channels % num_heads != 0) {
    throw ConfigError("sra_attention: " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  Tensor kv = kv_in;
  if (ratio > 1) {
    if (!params.reduce) throw ConfigError("sra_attention: ratio > 1 but no spatial-reduction parameters");
    kv = spatial_reduce(tape, kv_in, kv_grid, ratio, *params.reduce);
  } else if (kv_in.extent(0) != kv_grid.tokens()) {
    throw DimensionError("sra_attention: key/value length does not match its grid");
  }

  const Tensor q = matmul(tape, q_in, params.query);
  const Tensor k = matmul(tape, kv, params.key);
  const Tensor v = matmul(tape, kv, params.value);

  const std::size_t head_dim = channels / num_heads;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t j = 0; j < num_heads; ++j) {
    const Tensor qj = slice(tape, q, 1, j * head_dim, head_dim);
    const Tensor kj = slice(tape, k, 1, j * head_dim, head_dim);
    const Tensor vj = slice(tape, v, 1, j * head_dim, head_dim);
    const Tensor scores = scale(tape, matmul(tape, qj, transpose(tape, kj)), temperature);
    const Tensor weights = softmax(tape, scores, 1);
    if (attention) attention->push_back(weights);
    heads.push_back(matmul(tape, weights, vj));
  }
  const Tensor merged = num_heads == 1 ? heads.front() : concat(tape, heads, 1);
  return linear(tape, merged, params.output.weight, params.output.bias);
}

Tensor encoder_layer(Tape& tape, const Tensor& x, GridShape grid, const EncoderLayerParams& params,
                     const StageConfig& stage, double norm_eps) {
  const Tensor normed = layer_norm(tape, x, params.attn_norm.gain, params.attn_norm.bias, norm_eps);
  const Tensor attended =
      sra_attention(tape, normed, normed, grid, params.attn, stage.num_heads, stage.reduction_ratio);
  const Tensor mid = add(tape, x, attended);
  const Tensor normed2 = layer_norm(tape, mid, params.ffn_norm.gain, params.ffn_norm.bias, norm_eps);
  const Tensor hidden = gelu(tape, linear(tape, normed2, params.ffn_in.weight, params.ffn_in.bias));
  const Tensor ffn = linear(tape, hidden, params.ffn_out.weight, params.ffn_out.bias);
  return add(tape, mid, ffn);
}

PVTModel::PVTModel(PVTConfig config) : config_(std::move(config)) {
  validate(config_);
  Rng rng(config_.seed);
  const double sd = config_.init_std;
  std::size_t in_channels = config_.channels;
  std::size_t h = config_.height, w = config_.width;
  for (std::size_t i = 0; i < config_.stages.size(); ++i) {
    const StageConfig& s = config_.stages[i];
    const std::string prefix = "stage" + std::to_string(i);
    h /= s.patch_size;
    w /= s.patch_size;
    const std::size_t c = s.embed_dim;

    StageParams stage;
    stage.patch_projection = init_linear(rng, s.patch_size * s.patch_size * in_channels, c, sd);
    stage.position = init_truncated_normal(rng, {h * w, c}, sd);
    register_linear(parameters_, prefix + ".patch", stage.patch_projection);
    parameters_.add(prefix + ".position", stage.position);

    for (std::size_t l = 0; l < s.depth; ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      EncoderLayerParams layer;
      layer.attn_norm = init_layer_norm(c);
      layer.attn.query = init_truncated_normal(rng, {c, c}, sd);
      layer.attn.key = init_truncated_normal(rng, {c, c}, sd);
      layer.attn.value = init_truncated_normal(rng, {c, c}, sd);
      if (s.reduction_ratio > 1) {
        SpatialReduceParams reduce;
        reduce.projection = init_linear(rng, s.reduction_ratio * s.reduction_ratio * c, c, sd);
        reduce.norm = init_layer_norm(c);
        reduce.norm_eps = config_.norm_eps;
        layer.attn.reduce = std::move(reduce);
      }
      layer.attn.output = init_linear(rng, c, c, sd);
      layer.ffn_norm = init_layer_norm(c);
      layer.ffn_in = init_linear(rng, c, s.mlp_ratio * c, sd);
      layer.ffn_out = init_linear(rng, s.mlp_ratio * c, c, sd);

      register_layer_norm(parameters_, lp + ".attn_norm", layer.attn_norm);
      parameters_.add(lp + ".attn.query", layer.attn.query);
      parameters_.add(lp + ".attn.key", layer.attn.key);
      parameters_.add(lp + ".attn.value", layer.attn.value);
      if (layer.attn.reduce) {
        register_linear(parameters_, lp + ".attn.reduce", layer.attn.reduce->projection);
        register_layer_norm(parameters_, lp + ".attn.reduce_norm", *layer.attn.reduce->norm);
      }
      register_linear(parameters_, lp + ".attn.output", layer.attn.output);
      register_layer_norm(parameters_, lp + ".ffn_norm", layer.ffn_norm);
      register_linear(parameters_, lp + ".ffn_in", layer.ffn_in);
      register_linear(parameters_, lp + ".ffn_out", layer.ffn_out);
      stage.layers.push_back(std::move(layer));
    }
    stages_.push_back(std::move(stage));
    in_channels = c;
  }
  final_norm_ = init_layer_norm(config_.feature_dim());
  register_layer_norm(parameters_, "final_norm", final_norm_);
}

std::vector<GridShape> PVTModel::stage_grids() const {
  std::vector<GridShape> grids;
  std::size_t h = config_.height, w = config_.width;
  for (const StageConfig& s : config_.stages) {
    h /= s.patch_size;
    w /= s.patch_size;
    grids.push_back({h, w});
  }
  return grids;
}

Tensor PVTModel::forward(Tape& tape, const Tensor& image, std::vector<Tensor>* stage_outputs) const {
  const Shape expected{config_.height, config_.width, config_.channels};
  if (image.shape() != expected) {
    throw ConfigError("image shape " + to_string(image.shape()) + " does not match model input " + to_string(expected));
  }
  const std::vector<GridShape> grids = stage_grids();
  Tensor grid_values = image;
  Tensor tokens;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const StageConfig& s = config_.stages[i];
    const StageParams& stage = stages_[i];
    tokens = patch_embed(tape, grid_values, s.patch_size, stage.patch_projection, stage.position);
    for (const EncoderLayerParams& layer : stage.layers) {
      tokens = encoder_layer(tape, tokens, grids[i], layer, s, config_.norm_eps);
    }
    if (stage_outputs) stage_outputs->push_back(tokens);
    if (i + 1 < stages_.size()) grid_values = reshape(tape, tokens, {grids[i].height, grids[i].width, s.embed_dim});
  }
  const Tensor normed = layer_norm(tape, tokens, final_norm_.gain, final_norm_.bias, config_.norm_eps);
  return mean(tape, normed, 0);
}

}  // namespace kinship
