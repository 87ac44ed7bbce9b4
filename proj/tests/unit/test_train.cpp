#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rankclust/train.hpp"

using namespace rankclust;

namespace {

ModelConfig tiny(NormKind norm) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.vocab_size = 16;
  c.context = 8;
  c.norm = norm;
  c.seed = 11;
  return c;
}

std::vector<Token> tokens(std::size_t n, std::uint64_t seed, Token vocab = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Token> d(0, vocab - 1);
  std::vector<Token> t(n);
  for (auto& x : t) x = d(rng);
  return t;
}

// Scales every weight up so gradients are well above float noise.
ToyModel boosted(const ModelConfig& c) {
  const auto m = ToyModel::init(c);
  std::mt19937_64 rng(5);
  std::normal_distribution<float> jitter(0.0f, 0.1f);
  std::vector<std::pair<std::string, DenseMatrix>> named;
  for (const auto& [n, t] : m.named_tensors()) {
    std::vector<float> v(t->values().begin(), t->values().end());
    for (auto& x : v) x = x * 3.0f + jitter(rng);
    named.emplace_back(n, DenseMatrix(t->rows(), t->cols(), std::move(v), t->role()));
  }
  return ToyModel::from_named_tensors(c, named);
}

ToyModel nudge(const ToyModel& m, std::size_t tensor, std::size_t index, float delta) {
  std::vector<std::pair<std::string, DenseMatrix>> named;
  std::size_t i = 0;
  for (const auto& [n, t] : m.named_tensors()) {
    std::vector<float> v(t->values().begin(), t->values().end());
    if (i++ == tensor) v[index] += delta;
    named.emplace_back(n, DenseMatrix(t->rows(), t->cols(), std::move(v), t->role()));
  }
  return ToyModel::from_named_tensors(m.config(), named);
}

}  // namespace

class GradCheck : public ::testing::TestWithParam<NormKind> {};

TEST_P(GradCheck, MatchesCentralDifferences) {
  const auto m = boosted(tiny(GetParam()));
  const auto seq = tokens(2 * 7 + 1, 9);
  std::vector<Token> in, tgt;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 7; ++i) {
      in.push_back(seq[b * 7 + i]);
      tgt.push_back(seq[b * 7 + i + 1]);
    }
  }
  const auto lg = loss_and_grad(m, in, tgt, 2);
  const auto named = m.named_tensors();
  ASSERT_EQ(lg.grads.size(), named.size());
  std::mt19937_64 rng(1);
  for (std::size_t ti = 0; ti < named.size(); ++ti) {
    ASSERT_EQ(lg.grads[ti].first, named[ti].first);
    const RowMatrix& g = lg.grads[ti].second;
    ASSERT_EQ(static_cast<std::size_t>(g.size()), named[ti].second->size());
    std::uniform_int_distribution<std::size_t> pick(0, named[ti].second->size() - 1);
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t idx = pick(rng);
      const float h = 1e-3f;
      const double up = loss_and_grad(nudge(m, ti, idx, h), in, tgt, 2).loss;
      const double dn = loss_and_grad(nudge(m, ti, idx, -h), in, tgt, 2).loss;
      const double fd = (up - dn) / (2.0 * h);
      const double an = g.data()[idx];
      EXPECT_NEAR(an, fd, 2e-3 + 0.05 * std::abs(fd)) << named[ti].first << "[" << idx << "]";
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Norms, GradCheck, ::testing::Values(NormKind::layer_norm, NormKind::rms_norm));

TEST(Train, LossMatchesPerplexity) {
  const auto m = ToyModel::init(tiny(NormKind::layer_norm));
  const auto seq = tokens(8, 2);
  std::vector<Token> in(seq.begin(), seq.end() - 1), tgt(seq.begin() + 1, seq.end());
  const auto lg = loss_and_grad(m, in, tgt, 1);
  EXPECT_NEAR(std::exp(lg.loss), perplexity(m, seq), 1e-4);
}

TEST(Train, ZeroStepsIsIdentity) {
  const auto c = tiny(NormKind::layer_norm);
  TrainOptions o;
  o.steps = 0;
  const auto r = train(c, tokens(500, 3), o);
  EXPECT_EQ(r.model.parameter_hash(), ToyModel::init(c).parameter_hash());
  EXPECT_TRUE(r.losses.empty());
}

TEST(Train, DeterministicAndLearns) {
  const auto c = tiny(NormKind::rms_norm);
  // A repeating pattern is easy to learn.
  std::vector<Token> data;
  for (int i = 0; i < 2000; ++i) data.push_back(static_cast<Token>((i * 7) % 13));
  TrainOptions o;
  o.steps = 150;
  o.warmup = 10;
  o.lr = 1e-2f;
  o.batch = 4;
  const auto a = train(c, data, o);
  const auto b = train(c, data, o);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.model.parameter_hash(), b.model.parameter_hash());
  ASSERT_EQ(a.losses.size(), 150u);
  EXPECT_LT(a.losses.back(), 0.5 * a.losses.front());
  for (double l : a.losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, Schedule) {
  TrainOptions o;
  o.steps = 1000;
  o.warmup = 100;
  o.lr = 1.0f;
  o.min_lr_fraction = 0.1f;
  EXPECT_NEAR(learning_rate(o, 0), 0.01, 1e-6);
  EXPECT_NEAR(learning_rate(o, 99), 1.0, 1e-6);
  EXPECT_NEAR(learning_rate(o, 999), 0.1, 1e-3);
  for (std::size_t s = 100; s + 1 < 1000; ++s) EXPECT_GE(learning_rate(o, s), learning_rate(o, s + 1));
}
