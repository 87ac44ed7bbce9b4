#pragma once

// Shared between model.cpp (inference) and train.cpp (backprop).

#include <span>
#include <vector>

#include <Eigen/Core>

#include "rankclust/model.hpp"

namespace rankclust::detail {

using ConstMap = Eigen::Map<const RowMatrix>;

struct MatView {
  const float* data = nullptr;
  Eigen::Index rows = 0, cols = 0;
  ConstMap map() const { return ConstMap(data, rows, cols); }
};

struct NormView {
  const float* gain = nullptr;
  const float* bias = nullptr;  // null for rms_norm
};

struct BlockView {
  NormView attn_norm;
  MatView q, k, v, o;
  NormView mlp_norm;
  MatView gate, up, down;

  const MatView& projection(Role role) const;
};

struct ModelView {
  ModelConfig config;
  MatView tok_emb, pos_emb;
  std::vector<BlockView> blocks;
  NormView final_norm;
  MatView head;
};

ModelView view_of(const ToyModel& model);

struct NormCache {
  RowMatrix xhat;
  Eigen::VectorXf rstd;
};

struct BlockCache {
  RowMatrix x_in;
  NormCache n1;
  RowMatrix h1, q, k, v;
  std::vector<RowMatrix> probs;  // softmax weights per (sequence, head), T x T
  RowMatrix att;
  RowMatrix x_mid;
  NormCache n2;
  RowMatrix h2, g, u, act;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  RowMatrix x_final;
  NormCache nf;
  RowMatrix hf;
};

struct ForwardOptions {
  const ProjectionFn* projection = nullptr;
  ForwardCache* cache = nullptr;
  // When probe_out is set, the forward pass stops after writing the post-norm
  // activations that follow block probe_block, and returns an empty matrix.
  std::size_t probe_block = 0;
  RowMatrix* probe_out = nullptr;
};

// Runs `batch` independent sequences of seq_len tokens laid out back to back.
// Returns logits of shape (batch * seq_len) x vocab.
RowMatrix forward_batch(const ModelView& m, std::span<const Token> tokens, std::size_t batch,
                        std::size_t seq_len, const ForwardOptions& opts);

void norm_forward(const RowMatrix& x, const NormView& p, NormKind kind, float eps, RowMatrix& out,
                  NormCache* cache);

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

}  // namespace rankclust::detail
