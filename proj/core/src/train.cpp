#include "rankclust/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "model_internal.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

namespace {

using detail::BlockCache;
using detail::ForwardCache;
using detail::MatView;
using detail::ModelView;
using detail::NormCache;
using detail::NormView;

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// Index of every tensor in named_tensors() order.
struct Layout {
  struct Norm {
    std::size_t gain = kNone, bias = kNone;
  };
  struct Block {
    Norm attn_norm;
    std::size_t q, k, v, o;
    Norm mlp_norm;
    std::size_t gate, up, down;
  };
  std::size_t tok_emb = 0, pos_emb = 1;
  std::vector<Block> blocks;
  Norm final_norm;
  std::size_t head = 0;
  std::size_t count = 0;

  explicit Layout(const ModelConfig& c) {
    std::size_t next = 2;
    auto norm = [&] {
      Norm n;
      n.gain = next++;
      if (c.norm == NormKind::layer_norm) n.bias = next++;
      return n;
    };
    for (std::size_t i = 0; i < c.n_layers; ++i) {
      Block b;
      b.attn_norm = norm();
      b.q = next++;
      b.k = next++;
      b.v = next++;
      b.o = next++;
      b.mlp_norm = norm();
      b.gate = next++;
      b.up = next++;
      b.down = next++;
      blocks.push_back(b);
    }
    final_norm = norm();
    head = next++;
    count = next;
  }
};

// Flat parameter (or gradient) storage, one row-major matrix per tensor.
using Store = std::vector<RowMatrix>;

Store store_of(const ToyModel& model) {
  Store s;
  for (const auto& [name, t] : model.named_tensors()) {
    s.emplace_back(Eigen::Map<const RowMatrix>(t->values().data(), static_cast<Eigen::Index>(t->rows()),
                                               static_cast<Eigen::Index>(t->cols())));
  }
  return s;
}

Store zeros_like(const Store& s) {
  Store z;
  z.reserve(s.size());
  for (const auto& m : s) z.push_back(RowMatrix::Zero(m.rows(), m.cols()));
  return z;
}

ModelView view_of(const ModelConfig& c, const Layout& l, const Store& s) {
  auto mat = [&](std::size_t i) { return MatView{s[i].data(), s[i].rows(), s[i].cols()}; };
  auto norm = [&](const Layout::Norm& n) {
    return NormView{s[n.gain].data(), n.bias == kNone ? nullptr : s[n.bias].data()};
  };
  ModelView v;
  v.config = c;
  v.tok_emb = mat(l.tok_emb);
  v.pos_emb = mat(l.pos_emb);
  for (const auto& b : l.blocks) {
    v.blocks.push_back({norm(b.attn_norm), mat(b.q), mat(b.k), mat(b.v), mat(b.o), norm(b.mlp_norm),
                        mat(b.gate), mat(b.up), mat(b.down)});
  }
  v.final_norm = norm(l.final_norm);
  v.head = mat(l.head);
  return v;
}

ToyModel model_of(const ToyModel& like, const Store& s) {
  std::vector<std::pair<std::string, DenseMatrix>> named;
  const auto names = like.named_tensors();
  for (std::size_t i = 0; i < s.size(); ++i) {
    named.emplace_back(names[i].first,
                       DenseMatrix(static_cast<std::size_t>(s[i].rows()), static_cast<std::size_t>(s[i].cols()),
                                   std::vector<float>(s[i].data(), s[i].data() + s[i].size())));
  }
  return ToyModel::from_named_tensors(like.config(), named);
}

// dy -> dx through a norm, accumulating the gain/bias gradients.
RowMatrix norm_backward(const RowMatrix& dy, const NormCache& cache, const float* gain_ptr, NormKind kind,
                        RowMatrix& dgain, RowMatrix* dbias) {
  const Eigen::Index d = dy.cols();
  const Eigen::Map<const Eigen::RowVectorXf> gain(gain_ptr, d);
  dgain += dy.cwiseProduct(cache.xhat).colwise().sum();
  if (dbias) *dbias += dy.colwise().sum();
  RowMatrix dx(dy.rows(), d);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Eigen::RowVectorXf dxhat = dy.row(r).cwiseProduct(gain);
    const auto xhat = cache.xhat.row(r);
    const float m2 = dxhat.dot(xhat) / static_cast<float>(d);
    if (kind == NormKind::layer_norm) {
      const float m1 = dxhat.mean();
      dx.row(r) = cache.rstd(r) * (dxhat.array() - m1 - xhat.array() * m2).matrix();
    } else {
      dx.row(r) = cache.rstd(r) * (dxhat.array() - xhat.array() * m2).matrix();
    }
  }
  return dx;
}

double backward(const ModelView& m, const Layout& l, std::span<const Token> inputs,
                std::span<const Token> targets, std::size_t batch, Store& grads) {
  const ModelConfig& c = m.config;
  const std::size_t seq_len = inputs.size() / batch;
  if (batch == 0 || seq_len * batch != inputs.size() || targets.size() != inputs.size()) {
    throw InvalidInput("inputs and targets must be batch x seq_len");
  }
  for (Token t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size) throw InvalidInput("target outside vocabulary");
  }

  ForwardCache cache;
  detail::ForwardOptions opts;
  opts.cache = &cache;
  RowMatrix logits = detail::forward_batch(m, inputs, batch, seq_len, opts);

  const auto n = logits.rows();
  const float inv_n = 1.0f / static_cast<float>(n);
  double loss = 0.0;
  RowMatrix dlogits(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = logits.row(r);
    const float mx = row.maxCoeff();
    Eigen::RowVectorXf e = (row.array() - mx).exp();
    const float sum = e.sum();
    const Token y = targets[static_cast<std::size_t>(r)];
    loss += static_cast<double>(mx) + std::log(static_cast<double>(sum)) - row(y);
    dlogits.row(r) = e * (inv_n / sum);
    dlogits(r, y) -= inv_n;
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericalError("training loss is not finite");

  grads[l.head].noalias() += cache.hf.transpose() * dlogits;
  RowMatrix dh = dlogits * m.head.map().transpose();
  RowMatrix dx = norm_backward(dh, cache.nf, m.final_norm.gain, c.norm, grads[l.final_norm.gain],
                               l.final_norm.bias == kNone ? nullptr : &grads[l.final_norm.bias]);

  const auto t_len = static_cast<Eigen::Index>(seq_len);
  const auto heads = static_cast<Eigen::Index>(c.n_heads);
  const Eigen::Index dh_size = static_cast<Eigen::Index>(c.d_model) / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh_size));

  for (std::size_t bi = m.blocks.size(); bi-- > 0;) {
    const auto& b = m.blocks[bi];
    const auto& lb = l.blocks[bi];
    const BlockCache& bc = cache.blocks[bi];

    // MLP
    grads[lb.down].noalias() += bc.act.transpose() * dx;
    RowMatrix dact = dx * b.down.map().transpose();
    RowMatrix dg(dact.rows(), dact.cols()), du(dact.rows(), dact.cols());
    for (Eigen::Index i = 0; i < dact.size(); ++i) {
      const float g = bc.g.data()[i];
      const float sig = 1.0f / (1.0f + std::exp(-g));
      du.data()[i] = dact.data()[i] * g * sig;
      dg.data()[i] = dact.data()[i] * bc.u.data()[i] * sig * (1.0f + g * (1.0f - sig));
    }
    grads[lb.gate].noalias() += bc.h2.transpose() * dg;
    grads[lb.up].noalias() += bc.h2.transpose() * du;
    RowMatrix dh2 = dg * b.gate.map().transpose();
    dh2.noalias() += du * b.up.map().transpose();
    dx += norm_backward(dh2, bc.n2, b.mlp_norm.gain, c.norm, grads[lb.mlp_norm.gain],
                        lb.mlp_norm.bias == kNone ? nullptr : &grads[lb.mlp_norm.bias]);

    // attention
    grads[lb.o].noalias() += bc.att.transpose() * dx;
    RowMatrix datt = dx * b.o.map().transpose();
    RowMatrix dq(datt.rows(), datt.cols()), dk(datt.rows(), datt.cols()), dv(datt.rows(), datt.cols());
    RowMatrix dp(t_len, t_len);
    for (std::size_t s = 0; s < batch; ++s) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(s) * t_len;
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const RowMatrix& p = bc.probs[s * c.n_heads + static_cast<std::size_t>(hd)];
        const auto da = datt.block(r0, hd * dh_size, t_len, dh_size);
        dp.noalias() = da * bc.v.block(r0, hd * dh_size, t_len, dh_size).transpose();
        dv.block(r0, hd * dh_size, t_len, dh_size).noalias() = p.transpose() * da;
        const Eigen::VectorXf rs = dp.cwiseProduct(p).rowwise().sum();
        RowMatrix ds = p.cwiseProduct((dp.colwise() - rs)) * scale;
        dq.block(r0, hd * dh_size, t_len, dh_size).noalias() =
            ds * bc.k.block(r0, hd * dh_size, t_len, dh_size);
        dk.block(r0, hd * dh_size, t_len, dh_size).noalias() =
            ds.transpose() * bc.q.block(r0, hd * dh_size, t_len, dh_size);
      }
    }
    grads[lb.q].noalias() += bc.h1.transpose() * dq;
    grads[lb.k].noalias() += bc.h1.transpose() * dk;
    grads[lb.v].noalias() += bc.h1.transpose() * dv;
    RowMatrix dh1 = dq * b.q.map().transpose();
    dh1.noalias() += dk * b.k.map().transpose();
    dh1.noalias() += dv * b.v.map().transpose();
    dx += norm_backward(dh1, bc.n1, b.attn_norm.gain, c.norm, grads[lb.attn_norm.gain],
                        lb.attn_norm.bias == kNone ? nullptr : &grads[lb.attn_norm.bias]);
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    grads[l.tok_emb].row(inputs[static_cast<std::size_t>(r)]) += dx.row(r);
    grads[l.pos_emb].row(r % t_len) += dx.row(r);
  }
  return loss;
}

}  // namespace

float learning_rate(const TrainOptions& o, std::size_t step) {
  if (o.warmup > 0 && step < o.warmup) {
    return o.lr * static_cast<float>(step + 1) / static_cast<float>(o.warmup);
  }
  const std::size_t decay = o.steps > o.warmup ? o.steps - o.warmup : 1;
  const double progress = std::min(1.0, static_cast<double>(step - std::min(step, o.warmup)) /
                                            static_cast<double>(decay));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return static_cast<float>(o.lr * (o.min_lr_fraction + (1.0 - o.min_lr_fraction) * cosine));
}

LossAndGrad loss_and_grad(const ToyModel& model, std::span<const Token> inputs,
                          std::span<const Token> targets, std::size_t batch) {
  const Layout layout(model.config());
  Store params = store_of(model);
  Store grads = zeros_like(params);
  LossAndGrad out;
  out.loss = backward(view_of(model.config(), layout, params), layout, inputs, targets, batch, grads);
  const auto names = model.named_tensors();
  for (std::size_t i = 0; i < grads.size(); ++i) out.grads.emplace_back(names[i].first, std::move(grads[i]));
  return out;
}

TrainResult train(const ModelConfig& config, std::span<const Token> tokens, const TrainOptions& options) {
  return train(ToyModel::init(config), tokens, options);
}

TrainResult train(const ToyModel& start, std::span<const Token> tokens, const TrainOptions& o) {
  const ModelConfig& c = start.config();
  const std::size_t seq_len = o.seq_len == 0 ? c.context : o.seq_len;
  if (seq_len > c.context) throw InvalidInput("training seq_len exceeds the model context");
  if (o.batch == 0) throw InvalidInput("training batch must be positive");
  if (tokens.size() < seq_len + 1) {
    throw InvalidInput(fmt::format("training needs at least {} tokens, got {}", seq_len + 1, tokens.size()));
  }
  if (!(o.lr > 0.0f)) throw InvalidInput("learning rate must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout(c);
  Store params = store_of(start);
  Store grads = zeros_like(params);
  Store m1 = zeros_like(params);
  Store m2 = zeros_like(params);

  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - seq_len - 1);
  std::vector<Token> inputs(o.batch * seq_len), targets(o.batch * seq_len);

  TrainResult result{start, {}, 0.0};
  result.losses.reserve(o.steps);
  for (std::size_t step = 0; step < o.steps; ++step) {
    for (std::size_t s = 0; s < o.batch; ++s) {
      const std::size_t at = pick(rng);
      std::copy_n(tokens.begin() + static_cast<std::ptrdiff_t>(at), seq_len, inputs.begin() + static_cast<std::ptrdiff_t>(s * seq_len));
      std::copy_n(tokens.begin() + static_cast<std::ptrdiff_t>(at + 1), seq_len, targets.begin() + static_cast<std::ptrdiff_t>(s * seq_len));
    }
    for (auto& g : grads) g.setZero();
    const double loss = backward(view_of(c, layout, params), layout, inputs, targets, o.batch, grads);
    result.losses.push_back(loss);

    double norm2 = 0.0;
    for (const auto& g : grads) norm2 += static_cast<double>(g.squaredNorm());
    const double norm = std::sqrt(norm2);
    if (!std::isfinite(norm)) throw NumericalError(fmt::format("gradient is not finite at step {}", step));
    const float clip = (o.clip > 0.0f && norm > o.clip) ? static_cast<float>(o.clip / norm) : 1.0f;

    const float lr = learning_rate(o, step);
    const float bc1 = 1.0f - std::pow(o.beta1, static_cast<float>(step + 1));
    const float bc2 = 1.0f - std::pow(o.beta2, static_cast<float>(step + 1));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto g = grads[i].array() * clip;
      m1[i].array() = o.beta1 * m1[i].array() + (1.0f - o.beta1) * g;
      m2[i].array() = o.beta2 * m2[i].array() + (1.0f - o.beta2) * g.square();
      params[i].array() -= lr * (m1[i].array() / bc1) / ((m2[i].array() / bc2).sqrt() + o.adam_eps);
    }
    if (o.on_log && o.log_every > 0 && (step % o.log_every == 0 || step + 1 == o.steps)) o.on_log(step, loss);
  }
  result.model = model_of(start, params);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace rankclust
