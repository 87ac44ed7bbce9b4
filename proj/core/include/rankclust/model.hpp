#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rankclust/tensor.hpp"

namespace rankclust {

using Token = std::int32_t;
using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NormKind { layer_norm, rms_norm };

std::string_view to_string(NormKind norm);
NormKind parse_norm(std::string_view text);

struct ModelConfig {
  std::size_t n_layers = 8;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 256;
  std::size_t context = 128;
  NormKind norm = NormKind::layer_norm;
  float eps = kDefaultNormEps;
  std::uint64_t seed = 0;

  void validate() const;
  // Closed form: embeddings + positions + blocks + final norm + head.
  std::size_t parameter_count() const;

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The seven clusterable projections of a block, in storage order.
inline constexpr std::array<Role, 7> kProjectionRoles = {Role::q,    Role::k,  Role::v,   Role::o,
                                                         Role::gate, Role::up, Role::down};

bool is_attention(Role role) noexcept;

struct LayerSelector {
  std::size_t block = 0;
  Role role = Role::gate;

  // "layers.3.mlp.gate_proj" / "layers.3.self_attn.q_proj".
  std::string to_string() const;
  // Accepts the long form above or the short form "3.gate".
  static LayerSelector parse(std::string_view text);

  friend bool operator==(const LayerSelector&, const LayerSelector&) = default;
  friend auto operator<=>(const LayerSelector&, const LayerSelector&) = default;
};

using TensorPtr = std::shared_ptr<const DenseMatrix>;

struct NormParams {
  TensorPtr gain;  // 1 x d
  TensorPtr bias;  // 1 x d; null for rms_norm
};

struct BlockParams {
  NormParams attn_norm;
  TensorPtr q, k, v, o;  // d x d
  NormParams mlp_norm;
  TensorPtr gate, up;  // d x d_ff
  TensorPtr down;      // d_ff x d
};

struct ModelParams {
  TensorPtr tok_emb;  // vocab x d
  TensorPtr pos_emb;  // context x d
  std::vector<BlockParams> blocks;
  NormParams final_norm;
  TensorPtr head;  // d x vocab
};

// Decoder-only transformer: learned absolute positions, pre-norm attention
// and SwiGLU MLP blocks, final norm, untied LM head. Immutable: every
// tensor is shared, and set_projection returns a new model that shares all
// the untouched tensors with this one.
class ToyModel {
 public:
  static ToyModel init(const ModelConfig& config);
  static ToyModel from_params(const ModelConfig& config, ModelParams params);

  const ModelConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }

  const DenseMatrix& projection(const LayerSelector& sel) const;
  DenseMatrix get_projection(const LayerSelector& sel) const { return projection(sel); }
  ToyModel set_projection(const LayerSelector& sel, DenseMatrix w) const;

  std::vector<LayerSelector> projection_selectors() const;

  // Every tensor with its checkpoint name, in a fixed order.
  std::vector<std::pair<std::string, TensorPtr>> named_tensors() const;
  static ToyModel from_named_tensors(const ModelConfig& config,
                                     std::span<const std::pair<std::string, DenseMatrix>> tensors);

  std::size_t parameter_count() const;
  // FNV-1a over names, shapes and raw float bits of every tensor.
  std::uint64_t parameter_hash() const;

 private:
  ToyModel(ModelConfig config, ModelParams params)
      : config_(std::move(config)), params_(std::move(params)) {}

  void check_selector(const LayerSelector& sel) const;

  ModelConfig config_;
  ModelParams params_;
};

std::string tensor_name(const LayerSelector& sel);

// Replaces how projections are applied: receives the selector and the N x D
// block input, returns the N x O output. Used to run the LUT execution path.
using ProjectionFn = std::function<RowMatrix(const LayerSelector&, const RowMatrix&)>;

// Logits for one sequence, T x vocab. T must not exceed the context length.
RowMatrix forward_logits(const ToyModel& model, std::span<const Token> tokens,
                         const ProjectionFn* projection = nullptr);
DenseMatrix forward(const ToyModel& model, std::span<const Token> tokens);

// exp(mean next-token NLL) over consecutive non-overlapping windows of the
// context length (a trailing window shorter than two tokens is dropped).
double perplexity(const ToyModel& model, std::span<const Token> tokens);

// Output of the norm that reads the residual stream right after `block`
// (the next block's attention norm, or the final norm after the last block),
// one row per position.
DenseMatrix probe_post_norm(const ToyModel& model, std::size_t block, std::span<const Token> tokens);

}  // namespace rankclust
