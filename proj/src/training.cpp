#include "neptune/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "neptune/errors.hpp"
#include "neptune/eval.hpp"
#include "neptune/kernels.hpp"

namespace neptune {

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractViolation("TrainConfig: " + m); };
  if (d == 0 || k == 0) fail("d and k must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must be in (0, 1]");
  if (batch_size == 0) fail("batch_size must be positive");
  for (Real r : {input_dropout, hidden1_dropout, hidden2_dropout}) {
    if (!(r >= 0.0 && r < 1.0)) fail("dropout rates must be in [0, 1)");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
}

namespace {

std::string format_real(Real x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ContractViolation("config '" + std::string(key) + "': cannot parse '" +
                            std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ContractViolation("config '" + std::string(key) + "': expected a boolean, got '" +
                          std::string(v) + "'");
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == s.npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

std::string to_key_values(const TrainConfig& c) {
  std::ostringstream os;
  os << "d = " << c.d << '\n'
     << "k = " << c.k << '\n'
     << "lr = " << format_real(c.lr) << '\n'
     << "lr_decay = " << format_real(c.lr_decay) << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "input_dropout = " << format_real(c.input_dropout) << '\n'
     << "hidden1_dropout = " << format_real(c.hidden1_dropout) << '\n'
     << "hidden2_dropout = " << format_real(c.hidden2_dropout) << '\n'
     << "batch_norm = " << (c.batch_norm ? "true" : "false") << '\n'
     << "label_smoothing = " << format_real(c.label_smoothing) << '\n'
     << "activation = " << to_string(c.activation) << '\n'
     << "seed = " << c.seed << '\n'
     << "adam_beta1 = " << format_real(c.adam_beta1) << '\n'
     << "adam_beta2 = " << format_real(c.adam_beta2) << '\n'
     << "adam_eps = " << format_real(c.adam_eps) << '\n'
     << "valid_every = " << c.valid_every << '\n'
     << "keep_best = " << (c.keep_best ? "true" : "false") << '\n';
  return os.str();
}

void set_config_value(TrainConfig& c, std::string_view key, std::string_view value) {
  const auto v = trim(value);
  if (key == "d") c.d = parse_number<std::size_t>(key, v);
  else if (key == "k") c.k = parse_number<std::size_t>(key, v);
  else if (key == "lr") c.lr = parse_number<Real>(key, v);
  else if (key == "lr_decay") c.lr_decay = parse_number<Real>(key, v);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, v);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "input_dropout") c.input_dropout = parse_number<Real>(key, v);
  else if (key == "hidden1_dropout") c.hidden1_dropout = parse_number<Real>(key, v);
  else if (key == "hidden2_dropout") c.hidden2_dropout = parse_number<Real>(key, v);
  else if (key == "batch_norm") c.batch_norm = parse_bool(key, v);
  else if (key == "label_smoothing") c.label_smoothing = parse_number<Real>(key, v);
  else if (key == "activation") c.activation = parse_activation(v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "adam_beta1") c.adam_beta1 = parse_number<Real>(key, v);
  else if (key == "adam_beta2") c.adam_beta2 = parse_number<Real>(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_number<Real>(key, v);
  else if (key == "valid_every") c.valid_every = parse_number<std::size_t>(key, v);
  else if (key == "keep_best") c.keep_best = parse_bool(key, v);
  else throw ContractViolation("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_key_values(std::string_view text) {
  TrainConfig c;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = trim(text.substr(pos, nl == text.npos ? text.npos : nl - pos));
    pos = nl == text.npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == line.npos) {
      throw ContractViolation("config line without '=': '" + std::string(line) + "'");
    }
    set_config_value(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Batches and gradients

LossBatch group_training_rows(const KnowledgeGraph& g) {
  std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> groups;
  for (const auto& t : g.split(Split::train)) groups[{t.head, t.relation}].push_back(t.tail);
  LossBatch out;
  out.rows.reserve(groups.size());
  out.targets.reserve(groups.size());
  for (auto& [key, tails] : groups) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
    out.rows.push_back({key.first, key.second});
    out.targets.push_back(std::move(tails));
  }
  return out;
}

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  const std::size_t d = p.entity_dim();
  return {Matrix(p.num_entities(), d),
          Matrix(p.num_relations(), p.relation_dim()),
          Tensor3(p.core.dims()[0], p.core.dims()[1], p.core.dims()[2]),
          Vector(d),
          Vector(d),
          Vector(d),
          Vector(d)};
}

bool GradientSet::all_finite() const {
  for (auto s : gradient_groups(*this)) {
    if (!neptune::all_finite(s)) return false;
  }
  return true;
}

std::array<std::span<Real>, kParamGroups> trainable_groups(ModelParams& p) {
  return {p.entity_emb.span(),     p.relation_emb.span(),    p.core.span(),
          p.bn_input.scale.span(), p.bn_input.shift.span(),  p.bn_hidden.scale.span(),
          p.bn_hidden.shift.span()};
}

std::array<std::span<const Real>, kParamGroups> trainable_groups(const ModelParams& p) {
  return {p.entity_emb.span(),     p.relation_emb.span(),    p.core.span(),
          p.bn_input.scale.span(), p.bn_input.shift.span(),  p.bn_hidden.scale.span(),
          p.bn_hidden.shift.span()};
}

std::array<std::span<const Real>, kParamGroups> gradient_groups(const GradientSet& g) {
  return {g.entity_emb.span(),     g.relation_emb.span(),   g.core.span(),
          g.bn_input_scale.span(), g.bn_input_shift.span(), g.bn_hidden_scale.span(),
          g.bn_hidden_shift.span()};
}

AdamState AdamState::zeros_like(const ModelParams& p) {
  AdamState s;
  const auto groups = trainable_groups(p);
  for (std::size_t i = 0; i < kParamGroups; ++i) {
    s.first[i].assign(groups[i].size(), 0.0);
    s.second[i].assign(groups[i].size(), 0.0);
  }
  return s;
}

namespace {

// log(1 + exp(-|x|)) + max(x, 0) - x y
Real bce_logit(Real x, Real y) {
  return std::max(x, Real{0}) - x * y + std::log1p(std::exp(-std::abs(x)));
}

Real sigmoid(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

// Fills per-entity targets for one row.
void dense_targets(std::span<const EntityId> targets, Real smoothing, std::span<Real> y) {
  const Real n = static_cast<Real>(y.size());
  const Real off = smoothing > 0 ? smoothing / n : 0.0;
  const Real on = smoothing > 0 ? (1.0 - smoothing) + smoothing / n : 1.0;
  std::fill(y.begin(), y.end(), off);
  for (EntityId t : targets) {
    if (t >= y.size()) {
      throw ContractViolation("target id " + std::to_string(t) + " out of range");
    }
    y[t] = on;
  }
}

// Backward through batch norm in train mode; dy is overwritten with dx.
void batch_norm_backward(const BatchNormState& s, const BatchNormCache& cache, Matrix& dy,
                         Vector& d_scale, Vector& d_shift) {
  const std::size_t n = dy.rows();
  const std::size_t f = dy.cols();
  const Real inv_n = 1.0 / static_cast<Real>(n);
  for (std::size_t c = 0; c < f; ++c) {
    Real sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      sum_dy += dy(b, c);
      sum_dy_xhat += dy(b, c) * cache.normalized(b, c);
    }
    d_scale[c] += sum_dy_xhat;
    d_shift[c] += sum_dy;
    // d xhat = dy * scale; dx = inv_std/n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
    const Real g = s.scale[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < n; ++b) {
      dy(b, c) = g * (dy(b, c) - inv_n * sum_dy - cache.normalized(b, c) * inv_n * sum_dy_xhat);
    }
  }
}

void apply_mask(Matrix& g, const Matrix& mask, Real scale) {
  auto gs = g.span();
  auto ms = mask.span();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= ms[i] * scale;
}

}  // namespace

Real loss_1n(std::span<const Real> logits, std::span<const EntityId> targets,
             Real label_smoothing) {
  std::vector<Real> y(logits.size());
  dense_targets(targets, label_smoothing, y);
  Real total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += bce_logit(logits[i], y[i]);
  return total;
}

StepResult forward_backward(ModelParams& p, const LossBatch& batch, const TrainConfig& cfg,
                            Rng& rng) {
  if (batch.rows.empty()) throw ContractViolation("forward_backward: empty batch");
  require_dim("forward_backward targets", batch.rows.size(), batch.targets.size());

  // Backprop through batch norm needs the scale as it was in the forward pass.
  const BatchNormState bn_in = p.bn_input;
  const BatchNormState bn_hid = p.bn_hidden;

  StepResult res;
  res.pass = forward_batch(p, batch.rows, cfg.activation, Mode::train, cfg.regularizers(), rng);
  const ForwardPass& fp = res.pass;
  res.grads = GradientSet::zeros_like(p);
  GradientSet& g = res.grads;

  const std::size_t n = batch.rows.size();
  const std::size_t ne = p.num_entities();
  const std::size_t d = p.entity_dim();
  const std::size_t k = p.relation_dim();
  const auto& kern = kernels::active();
  const Real inv_n = 1.0 / static_cast<Real>(n);

  // Loss and d logits.
  Matrix d_logits(n, ne);
  std::vector<Real> y(ne);
  Real total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    dense_targets(batch.targets[b], cfg.label_smoothing, y);
    const auto logits = fp.logits.row(b);
    auto dl = d_logits.row(b);
    for (std::size_t i = 0; i < ne; ++i) {
      total += bce_logit(logits[i], y[i]);
      dl[i] = (sigmoid(logits[i]) - y[i]) * inv_n;
    }
  }
  res.loss = total * inv_n;
  if (!std::isfinite(res.loss)) {
    throw NumericalError("non-finite loss in training step (lr too high or overflow)");
  }

  // Phi = E b: gradients to every entity row and to b.
  Matrix d_out(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    kern.ger(1.0, d_logits.row(b).data(), ne, fp.output.row(b).data(), d, g.entity_emb.data());
    kern.gemv_t(p.entity_emb.data(), ne, d, d_logits.row(b).data(), d_out.row(b).data());
  }

  // Hidden dropout 2, activation.
  apply_mask(d_out, fp.mask_hidden2, fp.scale_hidden2);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < d; ++c) {
      d_out(b, c) *= activate_grad(cfg.activation, fp.pre_activation(b, c));
    }
  }

  // BN_hidden, hidden dropout 1.
  if (fp.batch_norm) {
    batch_norm_backward(bn_hid, fp.bn_hidden_cache, d_out, g.bn_hidden_scale, g.bn_hidden_shift);
  }
  apply_mask(d_out, fp.mask_hidden1, fp.scale_hidden1);

  // hidden = A^T head_repr with A = core x_2 w_r.
  std::vector<Matrix> d_cores(fp.cores.size(), Matrix(d, d));
  Matrix d_head(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t ri = fp.relation_of[b];
    kern.gemv(fp.cores[ri].data(), d, d, d_out.row(b).data(), d_head.row(b).data());
    kern.ger(1.0, fp.head_repr.row(b).data(), d, d_out.row(b).data(), d, d_cores[ri].data());
  }

  // A[i][l] = sum_j core[i,j,l] w[j]
  Vector tmp(k);
  for (std::size_t ri = 0; ri < fp.relations.size(); ++ri) {
    const RelationId r = fp.relations[ri];
    const Real* w = p.relation_emb.row(r).data();
    Real* dw = g.relation_emb.row(r).data();
    const Matrix& da = d_cores[ri];
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t slab = i * k * d;
      kern.ger(1.0, w, k, da.row(i).data(), d, g.core.data() + slab);
      kern.gemv(p.core.data() + slab, k, d, da.row(i).data(), tmp.data());
      kern.axpy(1.0, tmp.data(), dw, k);
    }
  }

  // BN_input, input dropout, back into the head rows.
  if (fp.batch_norm) {
    batch_norm_backward(bn_in, fp.bn_input_cache, d_head, g.bn_input_scale, g.bn_input_shift);
  }
  apply_mask(d_head, fp.mask_input, fp.scale_input);
  for (std::size_t b = 0; b < n; ++b) {
    kern.axpy(1.0, d_head.row(b).data(), g.entity_emb.row(batch.rows[b].head).data(), d);
  }
  res.head_input_grad = std::move(d_head);

  if (!g.all_finite()) throw NumericalError("non-finite gradient in training step");
  return res;
}

void adam_step(ModelParams& p, const GradientSet& g, AdamState& s, Real lr, Real beta1,
               Real beta2, Real eps) {
  auto params = trainable_groups(p);
  const auto grads = gradient_groups(g);
  for (std::size_t gi = 0; gi < kParamGroups; ++gi) {
    require_dim("adam_step gradient", params[gi].size(), grads[gi].size());
    require_dim("adam_step first moment", params[gi].size(), s.first[gi].size());
    require_dim("adam_step second moment", params[gi].size(), s.second[gi].size());
  }
  ++s.step;
  const Real t = static_cast<Real>(s.step);
  const Real c1 = 1.0 - std::pow(beta1, t);
  const Real c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t gi = 0; gi < kParamGroups; ++gi) {
    auto w = params[gi];
    auto gr = grads[gi];
    auto& m = s.first[gi];
    auto& v = s.second[gi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gr[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gr[i] * gr[i];
      const Real mhat = m[i] / c1;
      const Real vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::string format_epoch_log(const EpochLog& e) {
  std::ostringstream os;
  os.precision(10);
  os << e.epoch << '\t' << e.mean_loss << '\t';
  if (e.valid_mrr) os << *e.valid_mrr;
  return os.str();
}

TrainResult train(const KnowledgeGraph& g, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  ModelParams params = init_params(g.num_entities(), g.num_relations(), cfg.d, cfg.k, cfg.seed);
  AdamState adam = AdamState::zeros_like(params);
  return train(g, cfg, std::move(params), std::move(adam), on_epoch);
}

TrainResult train(const KnowledgeGraph& g, const TrainConfig& cfg, ModelParams params,
                  AdamState adam, const EpochCallback& on_epoch) {
  cfg.validate();
  params.validate();
  require_dim("train: entity count", g.num_entities(), params.num_entities());
  require_dim("train: relation count", g.num_relations(), params.num_relations());
  if (g.split(Split::train).empty()) throw ContractViolation("train: empty training split");

  const LossBatch all = group_training_rows(g);
  // Resumed runs draw fresh streams rather than replaying the first epochs.
  const std::uint64_t stream_seed = cfg.seed ^ (adam.step * 0x9e3779b97f4a7c15ULL);
  Rng shuffle_rng = make_stream(stream_seed, "shuffle");
  Rng dropout_rng = make_stream(stream_seed, "dropout");

  TrainResult res{std::move(params), std::move(adam), {}, std::nullopt, 0.0};
  std::vector<std::size_t> order(all.rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Real lr = cfg.lr;
  LossBatch batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Real loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.rows.clear();
      batch.targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.rows.push_back(all.rows[order[i]]);
        batch.targets.push_back(all.targets[order[i]]);
      }
      StepResult step = forward_backward(res.params, batch, cfg, dropout_rng);
      loss_sum += step.loss * static_cast<Real>(end - start);
      adam_step(res.params, step.grads, res.adam, lr, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
    }
    lr *= cfg.lr_decay;

    EpochLog entry{epoch, loss_sum / static_cast<Real>(order.size()), std::nullopt};
    if (cfg.valid_every > 0 && epoch % cfg.valid_every == 0 && !g.split(Split::valid).empty()) {
      entry.valid_mrr = evaluate(res.params, g, Split::valid, cfg.activation).mrr;
      if (cfg.keep_best && (!res.best || *entry.valid_mrr > res.best_valid_mrr)) {
        res.best = res.params;
        res.best_valid_mrr = *entry.valid_mrr;
      }
    }
    res.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return res;
}

}  // namespace neptune
