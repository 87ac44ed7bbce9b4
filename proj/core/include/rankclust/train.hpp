#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rankclust/model.hpp"

namespace rankclust {

struct TrainOptions {
  std::size_t steps = 2000;
  float lr = 3e-3f;
  std::size_t batch = 8;
  std::size_t seq_len = 0;  // 0: the model context length
  std::size_t warmup = 100;
  float min_lr_fraction = 0.1f;
  float clip = 1.0f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float adam_eps = 1e-8f;
  std::uint64_t seed = 0;
  std::size_t log_every = 0;
  std::function<void(std::size_t step, double loss)> on_log;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> losses;  // one per step
  double seconds = 0.0;
};

// Adam on next-token cross entropy over random windows of `tokens`.
// Throws NumericalError if the loss stops being finite.
TrainResult train(const ModelConfig& config, std::span<const Token> tokens,
                  const TrainOptions& options);
TrainResult train(const ToyModel& start, std::span<const Token> tokens, const TrainOptions& options);

struct LossAndGrad {
  double loss = 0.0;
  // Same order and names as ToyModel::named_tensors.
  std::vector<std::pair<std::string, RowMatrix>> grads;
};

// Mean cross entropy of predicting targets[i] at inputs[i], for `batch`
// sequences of inputs.size() / batch tokens each, and its gradient.
LossAndGrad loss_and_grad(const ToyModel& model, std::span<const Token> inputs,
                          std::span<const Token> targets, std::size_t batch);

// Learning rate at `step` (0-based): linear warmup, then cosine decay.
float learning_rate(const TrainOptions& options, std::size_t step);

}  // namespace rankclust
