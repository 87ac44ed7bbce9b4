#include "rankclust/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "model_internal.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

using json = nlohmann::json;

std::string_view to_string(NormKind norm) {
  return norm == NormKind::layer_norm ? "layer_norm" : "rms_norm";
}

NormKind parse_norm(std::string_view text) {
  if (text == "layer_norm") return NormKind::layer_norm;
  if (text == "rms_norm") return NormKind::rms_norm;
  throw InvalidInput(fmt::format("unknown norm '{}'", text));
}

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 ||
      context == 0) {
    throw InvalidInput("model dimensions must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw InvalidInput(fmt::format("d_model={} is not divisible by n_heads={}", d_model, n_heads));
  }
  if (vocab_size > static_cast<std::size_t>(std::numeric_limits<Token>::max())) {
    throw InvalidInput("vocab_size too large");
  }
  if (!(eps >= 0.0f)) throw InvalidInput("norm eps must be non-negative");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t norm_params = norm == NormKind::layer_norm ? 2 * d_model : d_model;
  const std::size_t block = 4 * d_model * d_model + 3 * d_model * d_ff + 2 * norm_params;
  return vocab_size * d_model + context * d_model + n_layers * block + norm_params +
         d_model * vocab_size;
}

std::string ModelConfig::to_json() const {
  json j = {{"n_layers", n_layers},   {"d_model", d_model}, {"n_heads", n_heads},
            {"d_ff", d_ff},           {"vocab_size", vocab_size}, {"context", context},
            {"norm", std::string(rankclust::to_string(norm))}, {"eps", eps},
            {"seed", seed}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.context = j.at("context").get<std::size_t>();
    c.norm = parse_norm(j.at("norm").get<std::string>());
    c.eps = j.at("eps").get<float>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(fmt::format("bad model config JSON: {}", e.what()));
  }
}

bool is_attention(Role role) noexcept {
  return role == Role::q || role == Role::k || role == Role::v || role == Role::o;
}

std::string LayerSelector::to_string() const {
  return fmt::format("layers.{}.{}.{}_proj", block, is_attention(role) ? "self_attn" : "mlp",
                     rankclust::to_string(role));
}

LayerSelector LayerSelector::parse(std::string_view text) {
  auto parse_index = [&](std::string_view digits) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
      throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    }
    return out;
  };
  auto parse_projection_role = [&](std::string_view name) {
    const Role r = parse_role(name);
    if (r == Role::other) throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    return r;
  };

  constexpr std::string_view prefix = "layers.";
  if (text.substr(0, prefix.size()) == prefix) {
    std::string_view rest = text.substr(prefix.size());
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos) throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    LayerSelector sel;
    sel.block = parse_index(rest.substr(0, dot));
    rest = rest.substr(dot + 1);
    const auto dot2 = rest.find('.');
    if (dot2 == std::string_view::npos) throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    const std::string_view group = rest.substr(0, dot2);
    std::string_view name = rest.substr(dot2 + 1);
    constexpr std::string_view suffix = "_proj";
    if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix) {
      throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    }
    sel.role = parse_projection_role(name.substr(0, name.size() - suffix.size()));
    if (group != (is_attention(sel.role) ? "self_attn" : "mlp")) {
      throw InvalidInput(fmt::format("bad layer selector '{}'", text));
    }
    return sel;
  }
  const auto dot = text.find('.');
  if (dot == std::string_view::npos) throw InvalidInput(fmt::format("bad layer selector '{}'", text));
  return {parse_index(text.substr(0, dot)), parse_projection_role(text.substr(dot + 1))};
}

std::string tensor_name(const LayerSelector& sel) { return sel.to_string(); }

namespace {

TensorPtr make_tensor(std::size_t rows, std::size_t cols, Role role, std::mt19937_64& rng,
                      float std_dev) {
  std::normal_distribution<float> dist(0.0f, std_dev);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return std::make_shared<const DenseMatrix>(rows, cols, std::move(v), role);
}

TensorPtr constant(std::size_t cols, float value) {
  return std::make_shared<const DenseMatrix>(1, cols, std::vector<float>(cols, value));
}

NormParams make_norm(const ModelConfig& c) {
  return {constant(c.d_model, 1.0f),
          c.norm == NormKind::layer_norm ? constant(c.d_model, 0.0f) : nullptr};
}

TensorPtr& slot(BlockParams& b, Role role) {
  switch (role) {
    case Role::q: return b.q;
    case Role::k: return b.k;
    case Role::v: return b.v;
    case Role::o: return b.o;
    case Role::gate: return b.gate;
    case Role::up: return b.up;
    case Role::down: return b.down;
    default: break;
  }
  throw InvalidInput("not a projection role");
}

const TensorPtr& slot(const BlockParams& b, Role role) {
  return slot(const_cast<BlockParams&>(b), role);
}

std::pair<std::size_t, std::size_t> projection_shape(const ModelConfig& c, Role role) {
  switch (role) {
    case Role::gate:
    case Role::up: return {c.d_model, c.d_ff};
    case Role::down: return {c.d_ff, c.d_model};
    default: return {c.d_model, c.d_model};
  }
}

void check_shape(const std::string& name, const DenseMatrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InvalidInput(fmt::format("tensor '{}' is {}x{}, expected {}x{}", name, m.rows(), m.cols(),
                                   rows, cols));
  }
}

}  // namespace

ToyModel ToyModel::init(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const float base = 0.02f;
  const float resid = base / std::sqrt(2.0f * static_cast<float>(config.n_layers));

  ModelParams p;
  p.tok_emb = make_tensor(config.vocab_size, config.d_model, Role::other, rng, base);
  p.pos_emb = make_tensor(config.context, config.d_model, Role::other, rng, base);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    BlockParams b;
    b.attn_norm = make_norm(config);
    b.mlp_norm = make_norm(config);
    for (Role role : kProjectionRoles) {
      const auto [rows, cols] = projection_shape(config, role);
      const float sd = (role == Role::o || role == Role::down) ? resid : base;
      slot(b, role) = make_tensor(rows, cols, role, rng, sd);
    }
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = make_norm(config);
  p.head = make_tensor(config.d_model, config.vocab_size, Role::other, rng, base);
  return ToyModel(config, std::move(p));
}

ToyModel ToyModel::from_params(const ModelConfig& config, ModelParams params) {
  config.validate();
  ToyModel m(config, std::move(params));
  if (m.params_.blocks.size() == config.n_layers) {
    for (const auto& [name, t] : m.named_tensors()) {
      if (!t) throw InvalidInput(fmt::format("missing tensor '{}'", name));
    }
  }
  if (m.params_.blocks.size() != config.n_layers) {
    throw InvalidInput("block count does not match the config");
  }
  auto check_norm = [&](const NormParams& n, const std::string& name) {
    if (!n.gain || (config.norm == NormKind::layer_norm && !n.bias)) {
      throw InvalidInput(fmt::format("missing parameters for '{}'", name));
    }
    check_shape(name + ".weight", *n.gain, 1, config.d_model);
    if (config.norm == NormKind::layer_norm) check_shape(name + ".bias", *n.bias, 1, config.d_model);
  };
  check_shape("tok_embeddings", *m.params_.tok_emb, config.vocab_size, config.d_model);
  check_shape("pos_embeddings", *m.params_.pos_emb, config.context, config.d_model);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const auto& b = m.params_.blocks[i];
    check_norm(b.attn_norm, fmt::format("layers.{}.attn_norm", i));
    check_norm(b.mlp_norm, fmt::format("layers.{}.mlp_norm", i));
    for (Role role : kProjectionRoles) {
      const auto [rows, cols] = projection_shape(config, role);
      check_shape(tensor_name({i, role}), *slot(b, role), rows, cols);
    }
  }
  check_norm(m.params_.final_norm, "final_norm");
  check_shape("lm_head", *m.params_.head, config.d_model, config.vocab_size);
  return m;
}

void ToyModel::check_selector(const LayerSelector& sel) const {
  if (sel.block >= config_.n_layers) {
    throw InvalidInput(fmt::format("block {} out of range (model has {})", sel.block,
                                   config_.n_layers));
  }
  if (sel.role == Role::other) throw InvalidInput("selector role must be a projection");
}

const DenseMatrix& ToyModel::projection(const LayerSelector& sel) const {
  check_selector(sel);
  return *slot(params_.blocks[sel.block], sel.role);
}

ToyModel ToyModel::set_projection(const LayerSelector& sel, DenseMatrix w) const {
  check_selector(sel);
  const auto [rows, cols] = projection_shape(config_, sel.role);
  check_shape(sel.to_string(), w, rows, cols);
  ToyModel out = *this;
  slot(out.params_.blocks[sel.block], sel.role) =
      std::make_shared<const DenseMatrix>(w.with_role(sel.role));
  return out;
}

std::vector<LayerSelector> ToyModel::projection_selectors() const {
  std::vector<LayerSelector> out;
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    for (Role role : kProjectionRoles) out.push_back({i, role});
  }
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> ToyModel::named_tensors() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  auto add_norm = [&](const NormParams& n, const std::string& name) {
    out.emplace_back(name + ".weight", n.gain);
    if (n.bias) out.emplace_back(name + ".bias", n.bias);
  };
  out.emplace_back("tok_embeddings", params_.tok_emb);
  out.emplace_back("pos_embeddings", params_.pos_emb);
  for (std::size_t i = 0; i < params_.blocks.size(); ++i) {
    const auto& b = params_.blocks[i];
    add_norm(b.attn_norm, fmt::format("layers.{}.attn_norm", i));
    for (Role role : kProjectionRoles) {
      if (role == Role::gate) add_norm(b.mlp_norm, fmt::format("layers.{}.mlp_norm", i));
      out.emplace_back(tensor_name({i, role}), slot(b, role));
    }
  }
  add_norm(params_.final_norm, "final_norm");
  out.emplace_back("lm_head", params_.head);
  return out;
}

ToyModel ToyModel::from_named_tensors(const ModelConfig& config,
                                      std::span<const std::pair<std::string, DenseMatrix>> tensors) {
  config.validate();
  std::map<std::string, const DenseMatrix*> byname;
  for (const auto& [name, m] : tensors) byname[name] = &m;
  auto take = [&](const std::string& name, Role role = Role::other) -> TensorPtr {
    const auto it = byname.find(name);
    if (it == byname.end()) throw InvalidInput(fmt::format("checkpoint is missing '{}'", name));
    return std::make_shared<const DenseMatrix>(it->second->with_role(role));
  };
  auto take_norm = [&](const std::string& name) {
    NormParams n;
    n.gain = take(name + ".weight");
    if (config.norm == NormKind::layer_norm) n.bias = take(name + ".bias");
    return n;
  };
  ModelParams p;
  p.tok_emb = take("tok_embeddings");
  p.pos_emb = take("pos_embeddings");
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    BlockParams b;
    b.attn_norm = take_norm(fmt::format("layers.{}.attn_norm", i));
    b.mlp_norm = take_norm(fmt::format("layers.{}.mlp_norm", i));
    for (Role role : kProjectionRoles) slot(b, role) = take(tensor_name({i, role}), role);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = take_norm("final_norm");
  p.head = take("lm_head");
  return from_params(config, std::move(p));
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t->size();
  return n;
}

std::uint64_t ToyModel::parameter_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, t] : named_tensors()) {
    mix(name.data(), name.size());
    const std::uint64_t dims[2] = {t->rows(), t->cols()};
    mix(dims, sizeof(dims));
    mix(t->values().data(), t->values().size_bytes());
  }
  return h;
}

// --- forward ---------------------------------------------------------------

namespace detail {

const MatView& BlockView::projection(Role role) const {
  switch (role) {
    case Role::q: return q;
    case Role::k: return k;
    case Role::v: return v;
    case Role::o: return o;
    case Role::gate: return gate;
    case Role::up: return up;
    case Role::down: return down;
    default: break;
  }
  throw InvalidInput("not a projection role");
}

namespace {

MatView mat(const TensorPtr& t) {
  return {t->values().data(), static_cast<Eigen::Index>(t->rows()),
          static_cast<Eigen::Index>(t->cols())};
}

NormView norm_view(const NormParams& n) {
  return {n.gain->values().data(), n.bias ? n.bias->values().data() : nullptr};
}

}  // namespace

ModelView view_of(const ToyModel& model) {
  const auto& p = model.params();
  ModelView v;
  v.config = model.config();
  v.tok_emb = mat(p.tok_emb);
  v.pos_emb = mat(p.pos_emb);
  for (const auto& b : p.blocks) {
    v.blocks.push_back({norm_view(b.attn_norm), mat(b.q), mat(b.k), mat(b.v), mat(b.o),
                        norm_view(b.mlp_norm), mat(b.gate), mat(b.up), mat(b.down)});
  }
  v.final_norm = norm_view(p.final_norm);
  v.head = mat(p.head);
  return v;
}

void norm_forward(const RowMatrix& x, const NormView& p, NormKind kind, float eps, RowMatrix& out,
                  NormCache* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  out.resize(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(n);
  }
  const Eigen::Map<const Eigen::RowVectorXf> gain(p.gain, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = x.row(r);
    float mean = 0.0f;
    if (kind == NormKind::layer_norm) mean = row.mean();
    const float var = (row.array() - mean).square().mean();
    const float denom = var + eps;
    const float rstd = denom > 0.0f ? 1.0f / std::sqrt(denom) : 0.0f;
    out.row(r) = (row.array() - mean) * rstd;
    if (cache) {
      cache->xhat.row(r) = out.row(r);
      cache->rstd(r) = rstd;
    }
    out.row(r).array() *= gain.array();
    if (p.bias) out.row(r) += Eigen::Map<const Eigen::RowVectorXf>(p.bias, d);
  }
}

RowMatrix forward_batch(const ModelView& m, std::span<const Token> tokens, std::size_t batch,
                        std::size_t seq_len, const ForwardOptions& opts) {
  const ModelConfig& c = m.config;
  if (seq_len == 0 || seq_len > c.context) {
    throw InvalidInput(fmt::format("sequence length {} must be in [1, {}]", seq_len, c.context));
  }
  if (tokens.size() != batch * seq_len) throw InvalidInput("token count does not match batch shape");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= c.vocab_size) {
      throw InvalidInput(fmt::format("token {} at position {} is outside the vocabulary", tokens[i], i));
    }
  }

  const auto n = static_cast<Eigen::Index>(batch * seq_len);
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto t_len = static_cast<Eigen::Index>(seq_len);
  const auto heads = static_cast<Eigen::Index>(c.n_heads);
  const Eigen::Index dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  ForwardCache* cache = opts.cache;
  if (cache) cache->blocks.assign(m.blocks.size(), {});

  RowMatrix x(n, d);
  {
    const auto tok = m.tok_emb.map();
    const auto pos = m.pos_emb.map();
    for (Eigen::Index r = 0; r < n; ++r) {
      x.row(r) = tok.row(tokens[static_cast<std::size_t>(r)]) + pos.row(r % t_len);
    }
  }

  auto project = [&](std::size_t block, Role role, const RowMatrix& in) -> RowMatrix {
    if (opts.projection) return (*opts.projection)(LayerSelector{block, role}, in);
    RowMatrix out = in * m.blocks[block].projection(role).map();
    return out;
  };

  RowMatrix h, q, k, v, att, g, u, act;
  for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
    const BlockView& b = m.blocks[bi];
    BlockCache* bc = cache ? &cache->blocks[bi] : nullptr;
    if (bc) bc->x_in = x;

    norm_forward(x, b.attn_norm, c.norm, c.eps, h, bc ? &bc->n1 : nullptr);
    q = project(bi, Role::q, h);
    k = project(bi, Role::k, h);
    v = project(bi, Role::v, h);

    att.resize(n, d);
    if (bc) bc->probs.resize(batch * c.n_heads);
    RowMatrix scores(t_len, t_len);
    for (std::size_t s = 0; s < batch; ++s) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(s) * t_len;
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const auto qs = q.block(r0, hd * dh, t_len, dh);
        const auto ks = k.block(r0, hd * dh, t_len, dh);
        const auto vs = v.block(r0, hd * dh, t_len, dh);
        scores.noalias() = qs * ks.transpose();
        for (Eigen::Index i = 0; i < t_len; ++i) {
          auto seg = scores.row(i).head(i + 1).array();
          seg *= scale;
          seg = (seg - seg.maxCoeff()).exp();
          seg /= seg.sum();
          scores.row(i).tail(t_len - i - 1).setZero();
        }
        att.block(r0, hd * dh, t_len, dh).noalias() = scores * vs;
        if (bc) bc->probs[s * c.n_heads + static_cast<std::size_t>(hd)] = scores;
      }
    }
    if (bc) {
      bc->h1 = h;
      bc->q = q;
      bc->k = k;
      bc->v = v;
      bc->att = att;
    }
    x += project(bi, Role::o, att);
    if (bc) bc->x_mid = x;

    norm_forward(x, b.mlp_norm, c.norm, c.eps, h, bc ? &bc->n2 : nullptr);
    g = project(bi, Role::gate, h);
    u = project(bi, Role::up, h);
    act.resize(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) act.data()[i] = silu(g.data()[i]) * u.data()[i];
    if (bc) {
      bc->h2 = h;
      bc->g = g;
      bc->u = u;
      bc->act = act;
    }
    x += project(bi, Role::down, act);

    if (opts.probe_out && opts.probe_block == bi) {
      const NormView& next = bi + 1 < m.blocks.size() ? m.blocks[bi + 1].attn_norm : m.final_norm;
      norm_forward(x, next, c.norm, c.eps, *opts.probe_out, nullptr);
      return {};
    }
  }

  if (cache) cache->x_final = x;
  norm_forward(x, m.final_norm, c.norm, c.eps, h, cache ? &cache->nf : nullptr);
  if (cache) cache->hf = h;
  RowMatrix logits = h * m.head.map();
  return logits;
}

}  // namespace detail

RowMatrix forward_logits(const ToyModel& model, std::span<const Token> tokens,
                         const ProjectionFn* projection) {
  detail::ForwardOptions opts;
  opts.projection = projection;
  return detail::forward_batch(detail::view_of(model), tokens, 1, tokens.size(), opts);
}

DenseMatrix forward(const ToyModel& model, std::span<const Token> tokens) {
  RowMatrix logits = forward_logits(model, tokens);
  std::vector<float> values(logits.data(), logits.data() + logits.size());
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericalError("forward produced non-finite logits");
  }
  return DenseMatrix(static_cast<std::size_t>(logits.rows()), static_cast<std::size_t>(logits.cols()),
                     std::move(values));
}

namespace {

// Sum of next-token NLL over positions [0, seq_len - 1) of each sequence.
double window_nll(const RowMatrix& logits, std::span<const Token> tokens, std::size_t batch,
                  std::size_t seq_len) {
  double total = 0.0;
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t t = 0; t + 1 < seq_len; ++t) {
      const auto row = logits.row(static_cast<Eigen::Index>(s * seq_len + t));
      const float mx = row.maxCoeff();
      const double lse = mx + std::log(static_cast<double>((row.array() - mx).exp().sum()));
      total += lse - row(tokens[s * seq_len + t + 1]);
    }
  }
  return total;
}

}  // namespace

double perplexity(const ToyModel& model, std::span<const Token> tokens) {
  if (tokens.size() < 2) throw InvalidInput("perplexity needs at least two tokens");
  const std::size_t ctx = model.config().context;
  const auto view = detail::view_of(model);
  constexpr std::size_t kWindowsPerPass = 16;

  const std::size_t full = tokens.size() / ctx;
  double nll = 0.0;
  std::size_t predictions = 0;
  for (std::size_t w = 0; w < full; w += kWindowsPerPass) {
    const std::size_t batch = std::min(kWindowsPerPass, full - w);
    const auto chunk = tokens.subspan(w * ctx, batch * ctx);
    const RowMatrix logits = detail::forward_batch(view, chunk, batch, ctx, {});
    nll += window_nll(logits, chunk, batch, ctx);
    predictions += batch * (ctx - 1);
  }
  const std::size_t tail = tokens.size() - full * ctx;
  if (tail >= 2) {
    const auto chunk = tokens.subspan(full * ctx, tail);
    const RowMatrix logits = detail::forward_batch(view, chunk, 1, tail, {});
    nll += window_nll(logits, chunk, 1, tail);
    predictions += tail - 1;
  }
  const double ppl = std::exp(nll / static_cast<double>(predictions));
  if (!std::isfinite(ppl)) throw NumericalError("perplexity is not finite");
  return ppl;
}

DenseMatrix probe_post_norm(const ToyModel& model, std::size_t block, std::span<const Token> tokens) {
  if (block >= model.config().n_layers) {
    throw InvalidInput(fmt::format("probe block {} out of range", block));
  }
  RowMatrix out;
  detail::ForwardOptions opts;
  opts.probe_block = block;
  opts.probe_out = &out;
  detail::forward_batch(detail::view_of(model), tokens, 1, tokens.size(), opts);
  return DenseMatrix(static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols()),
                     std::vector<float>(out.data(), out.data() + out.size()));
}

}  // namespace rankclust
