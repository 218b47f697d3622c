#include "neptune/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "neptune/errors.hpp"
#include "neptune/kernels.hpp"

namespace neptune {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ContractViolation("unknown activation '" + std::string(name) + "'");
}

Real activate(Activation a, Real z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::tanh:
      return std::tanh(z);
    case Activation::identity:
      break;
  }
  return z;
}

Real activate_grad(Activation a, Real z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const Real t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::identity:
      break;
  }
  return 1.0;
}

BatchNormState::BatchNormState(std::size_t features)
    : scale(features, 1.0), shift(features, 0.0), running_mean(features, 0.0),
      running_var(features, 1.0) {}

void ModelParams::validate() const {
  const std::size_t d = entity_dim();
  const std::size_t k = relation_dim();
  const auto& dims = core.dims();
  require_dim("ModelParams core mode 1", d, dims[0]);
  require_dim("ModelParams core mode 2", k, dims[1]);
  require_dim("ModelParams core mode 3", d, dims[2]);
  require_dim("ModelParams bn_input", d, bn_input.features());
  require_dim("ModelParams bn_hidden", d, bn_hidden.features());
  for (const auto* bn : {&bn_input, &bn_hidden}) {
    require_dim("ModelParams bn shift", d, bn->shift.size());
    require_dim("ModelParams bn running_mean", d, bn->running_mean.size());
    require_dim("ModelParams bn running_var", d, bn->running_var.size());
    if (!(bn->epsilon > 0.0)) throw ContractViolation("batch norm epsilon must be positive");
  }
}

bool ModelParams::all_finite() const {
  bool ok = neptune::all_finite(entity_emb.span()) && neptune::all_finite(relation_emb.span()) &&
            neptune::all_finite(core.span());
  for (const auto* bn : {&bn_input, &bn_hidden}) {
    ok = ok && neptune::all_finite(bn->scale.span()) && neptune::all_finite(bn->shift.span()) &&
         neptune::all_finite(bn->running_mean.span()) &&
         neptune::all_finite(bn->running_var.span());
  }
  return ok;
}

ModelParams init_params(std::size_t num_entities, std::size_t num_relations, std::size_t d,
                        std::size_t k, std::uint64_t seed) {
  if (num_entities == 0 || num_relations == 0 || d == 0 || k == 0) {
    throw ContractViolation("init_params: all dimensions must be positive");
  }
  Rng rng = make_stream(seed, "init");
  std::normal_distribution<Real> normal(0.0, 1.0);
  std::uniform_real_distribution<Real> uniform(-1.0, 1.0);

  ModelParams p;
  p.entity_emb = Matrix(num_entities, d);
  p.relation_emb = Matrix(num_relations, k);
  p.core = Tensor3(d, k, d);
  const Real es = 1.0 / std::sqrt(static_cast<Real>(d));
  const Real rs = 1.0 / std::sqrt(static_cast<Real>(k));
  for (auto& x : p.entity_emb.span()) x = normal(rng) * es;
  for (auto& x : p.relation_emb.span()) x = normal(rng) * rs;
  for (auto& x : p.core.span()) x = uniform(rng);
  p.bn_input = BatchNormState(d);
  p.bn_hidden = BatchNormState(d);
  return p;
}

namespace {

void check_ids(const ModelParams& p, EntityId h, RelationId r) {
  if (h >= p.num_entities()) {
    throw ContractViolation("entity id " + std::to_string(h) + " out of range (|E| = " +
                            std::to_string(p.num_entities()) + ")");
  }
  if (r >= p.num_relations()) {
    throw ContractViolation("relation id " + std::to_string(r) + " out of range (|R| = " +
                            std::to_string(p.num_relations()) + ")");
  }
}

void check_ids(const ModelParams& p, EntityId h, RelationId r, EntityId t) {
  check_ids(p, h, r);
  if (t >= p.num_entities()) {
    throw ContractViolation("entity id " + std::to_string(t) + " out of range (|E| = " +
                            std::to_string(p.num_entities()) + ")");
  }
}

// core x_1 e_h x_2 w_r, a d-vector over tails.
Vector head_relation_vector(const ModelParams& p, EntityId h, RelationId r) {
  const Matrix m = mode_n_vec_product(p.core, p.entity_emb.row(h), 1);  // k x d
  Vector v(p.entity_dim());
  kernels::active().gemv_t(m.data(), m.rows(), m.cols(), p.relation_emb.row(r).data(), v.data());
  return v;
}

}  // namespace

Real score_tucker(const ModelParams& p, EntityId h, RelationId r, EntityId t) {
  check_ids(p, h, r, t);
  const Vector v = head_relation_vector(p, h, r);
  return dot(v.span(), p.entity_emb.row(t));
}

Real score_tucker_relation_last(const ModelParams& p, EntityId h, RelationId r, EntityId t) {
  check_ids(p, h, r, t);
  const Matrix m = mode_n_vec_product(p.core, p.entity_emb.row(h), 1);  // k x d
  const Vector v = matvec_rows(m, p.entity_emb.row(t));                 // k
  return dot(p.relation_emb.row(r), v.span());
}

Real score_neptune(const ModelParams& p, EntityId h, RelationId r, EntityId t, Activation act) {
  check_ids(p, h, r, t);
  Vector v = head_relation_vector(p, h, r);
  for (auto& x : v.span()) x = activate(act, x);
  return dot(v.span(), p.entity_emb.row(t));
}

Real score_ntn_form(const Tensor3& core, std::span<const Real> w_r, std::span<const Real> e_h,
                    std::span<const Real> e_t, Activation act) {
  require_dim("score_ntn_form e_h", core.dim(1), e_h.size());
  require_dim("score_ntn_form w_r", core.dim(2), w_r.size());
  require_dim("score_ntn_form e_t", core.dim(3), e_t.size());
  const Matrix m = mode_n_vec_product(core, e_h, 1);  // k x d
  Vector v = matvec_rows(m, e_t);                      // k
  for (auto& x : v.span()) x = activate(act, x);
  return dot(w_r, v.span());
}

Matrix relation_core(const Tensor3& core, std::span<const Real> w_r) {
  return mode_n_vec_product(core, w_r, 2);
}

DropoutResult dropout_forward(std::span<const Real> x, Real rate, Mode mode, Rng& rng) {
  DropoutResult out{Vector(std::vector<Real>(x.begin(), x.end())), Vector(x.size(), 1.0), 1.0};
  if (mode == Mode::eval || rate <= 0.0) return out;
  if (rate >= 1.0) {
    out.output.fill(0.0);
    out.mask.fill(0.0);
    out.scale = 0.0;
    return out;
  }
  out.scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (u(rng) < rate) {
      out.mask[i] = 0.0;
      out.output[i] = 0.0;
    } else {
      out.output[i] = x[i] * out.scale;
    }
  }
  return out;
}

namespace {

// Shared by the mutating and read-only forward paths; `update` receives the
// running-statistics update in train mode.
Matrix batch_norm_apply(const BatchNormState& s, const Matrix& x, Mode mode,
                        BatchNormCache* cache, BatchNormState* update) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  require_dim("batch_norm_forward features", s.features(), f);
  Matrix y(n, f);
  Vector mean(f), var(f), inv_std(f);

  if (mode == Mode::train) {
    if (n == 0) throw ContractViolation("batch_norm_forward: empty batch in train mode");
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < f; ++c) mean[c] += x(b, c);
    }
    for (std::size_t c = 0; c < f; ++c) mean[c] /= static_cast<Real>(n);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < f; ++c) {
        const Real dv = x(b, c) - mean[c];
        var[c] += dv * dv;
      }
    }
    for (std::size_t c = 0; c < f; ++c) var[c] /= static_cast<Real>(n);
  } else {
    mean = s.running_mean;
    var = s.running_var;
  }
  for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + s.epsilon);

  if (cache) cache->normalized = Matrix(n, f);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < f; ++c) {
      const Real xhat = (x(b, c) - mean[c]) * inv_std[c];
      if (cache) cache->normalized(b, c) = xhat;
      y(b, c) = s.scale[c] * xhat + s.shift[c];
    }
  }
  if (cache) cache->inv_std = inv_std;

  if (mode == Mode::train && update) {
    const Real m = update->momentum;
    const Real unbias =
        n > 1 ? static_cast<Real>(n) / static_cast<Real>(n - 1) : static_cast<Real>(1);
    for (std::size_t c = 0; c < f; ++c) {
      update->running_mean[c] = (1.0 - m) * update->running_mean[c] + m * mean[c];
      update->running_var[c] = (1.0 - m) * update->running_var[c] + m * var[c] * unbias;
    }
  }
  return y;
}

void apply_dropout_rows(Matrix& x, Real rate, Mode mode, Rng& rng, Matrix& mask, Real& scale) {
  mask = Matrix(x.rows(), x.cols(), 1.0);
  scale = 1.0;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto res = dropout_forward(x.row(b), rate, mode, rng);
    std::copy(res.output.span().begin(), res.output.span().end(), x.row(b).begin());
    std::copy(res.mask.span().begin(), res.mask.span().end(), mask.row(b).begin());
    scale = res.scale;
  }
}

ForwardPass forward_impl(const ModelParams& p, std::span<const Query> rows, Activation act,
                         Mode mode, const Regularizers& reg, Rng* rng, ModelParams* update) {
  const std::size_t n = rows.size();
  const std::size_t d = p.entity_dim();
  const std::size_t ne = p.num_entities();
  const auto& kern = kernels::active();
  Rng unused;
  Rng& r = rng ? *rng : unused;

  ForwardPass fp;
  fp.rows.assign(rows.begin(), rows.end());
  fp.relation_of.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    check_ids(p, rows[b].head, rows[b].relation);
    const auto it = std::find(fp.relations.begin(), fp.relations.end(), rows[b].relation);
    if (it == fp.relations.end()) {
      fp.relation_of[b] = fp.relations.size();
      fp.relations.push_back(rows[b].relation);
      fp.cores.push_back(relation_core(p.core, p.relation_emb.row(rows[b].relation)));
    } else {
      fp.relation_of[b] = static_cast<std::size_t>(it - fp.relations.begin());
    }
  }

  fp.bn_input_in = Matrix(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    const auto src = p.entity_emb.row(rows[b].head);
    std::copy(src.begin(), src.end(), fp.bn_input_in.row(b).begin());
  }
  apply_dropout_rows(fp.bn_input_in, reg.input_dropout, mode, r, fp.mask_input, fp.scale_input);
  fp.batch_norm = reg.batch_norm;
  fp.head_repr = reg.batch_norm
                     ? batch_norm_apply(p.bn_input, fp.bn_input_in, mode, &fp.bn_input_cache,
                                        update ? &update->bn_input : nullptr)
                     : fp.bn_input_in;

  fp.hidden = Matrix(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    const Matrix& a = fp.cores[fp.relation_of[b]];
    kern.gemv_t(a.data(), d, d, fp.head_repr.row(b).data(), fp.hidden.row(b).data());
  }
  Matrix dropped = fp.hidden;
  apply_dropout_rows(dropped, reg.hidden1_dropout, mode, r, fp.mask_hidden1, fp.scale_hidden1);
  fp.pre_activation = reg.batch_norm
                          ? batch_norm_apply(p.bn_hidden, dropped, mode, &fp.bn_hidden_cache,
                                             update ? &update->bn_hidden : nullptr)
                          : std::move(dropped);

  fp.output = Matrix(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < d; ++c) fp.output(b, c) = activate(act, fp.pre_activation(b, c));
  }
  apply_dropout_rows(fp.output, reg.hidden2_dropout, mode, r, fp.mask_hidden2, fp.scale_hidden2);

  // Entity blocks stay cache-resident across the whole batch.
  fp.logits = Matrix(n, ne);
  constexpr std::size_t kEntityBlock = 64;
  for (std::size_t t0 = 0; t0 < ne; t0 += kEntityBlock) {
    const std::size_t rows_in_block = std::min(kEntityBlock, ne - t0);
    const Real* block = p.entity_emb.data() + t0 * d;
    for (std::size_t b = 0; b < n; ++b) {
      kern.gemv(block, rows_in_block, d, fp.output.row(b).data(), fp.logits.row(b).data() + t0);
    }
  }
  return fp;
}

}  // namespace

Matrix batch_norm_forward(BatchNormState& state, const Matrix& x, Mode mode,
                          BatchNormCache* cache) {
  return batch_norm_apply(state, x, mode, cache, &state);
}

ForwardPass forward_batch(ModelParams& p, std::span<const Query> rows, Activation act, Mode mode,
                          const Regularizers& reg, Rng& rng) {
  return forward_impl(p, rows, act, mode, reg, &rng, mode == Mode::train ? &p : nullptr);
}

Matrix score_queries(const ModelParams& p, std::span<const Query> rows, Activation act,
                     const Regularizers& reg) {
  return forward_impl(p, rows, act, Mode::eval, reg, nullptr, nullptr).logits;
}

Vector score_all_tails(ModelParams& p, EntityId h, RelationId r, Activation act, Mode mode,
                       const Regularizers& reg, Rng& rng) {
  const Query q{h, r};
  ForwardPass fp = forward_batch(p, std::span<const Query>(&q, 1), act, mode, reg, rng);
  const auto row = fp.logits.row(0);
  return Vector(std::vector<Real>(row.begin(), row.end()));
}

Vector score_all_tails(const ModelParams& p, EntityId h, RelationId r, Activation act,
                       const Regularizers& reg) {
  const Query q{h, r};
  Matrix logits = score_queries(p, std::span<const Query>(&q, 1), act, reg);
  const auto row = logits.row(0);
  return Vector(std::vector<Real>(row.begin(), row.end()));
}

}  // namespace neptune
