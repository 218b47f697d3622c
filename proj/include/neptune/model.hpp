#pragma once

// Model parameters and scoring.
//
// The core tensor is d x k x d with modes (head, relation, tail). Scores are
// raw logits; the sigmoid belongs to the loss.
//
// Regularized 1-N pipeline for a query (h, r), with A = core x_2 w_r:
//
//   x   = BN_input(dropout_input(e_h))
//   z   = BN_hidden(dropout_hidden1(A x_1 x))
//   b   = dropout_hidden2(act(z))
//   Phi = E b
//
// With Regularizers::none() this reduces to score_neptune for every tail.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "neptune/kg.hpp"
#include "neptune/rng.hpp"
#include "neptune/tensor.hpp"

namespace neptune {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

Real activate(Activation a, Real z);
/// Derivative of the activation at pre-activation value z (relu'(0) = 0).
Real activate_grad(Activation a, Real z);

enum class Mode { train, eval };

struct BatchNormState {
  Vector scale;
  Vector shift;
  Vector running_mean;
  Vector running_var;
  Real momentum = 0.1;
  Real epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t features);

  std::size_t features() const noexcept { return scale.size(); }

  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

struct ModelParams {
  Matrix entity_emb;    // |E| x d
  Matrix relation_emb;  // |R| x k
  Tensor3 core;         // d x k x d
  BatchNormState bn_input;
  BatchNormState bn_hidden;

  std::size_t num_entities() const noexcept { return entity_emb.rows(); }
  std::size_t num_relations() const noexcept { return relation_emb.rows(); }
  std::size_t entity_dim() const noexcept { return entity_emb.cols(); }
  std::size_t relation_dim() const noexcept { return relation_emb.cols(); }

  /// Throws ContractViolation if shapes are mutually inconsistent.
  void validate() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Entities ~ N(0,1)/sqrt(d), relations ~ N(0,1)/sqrt(k), core ~ U(-1,1),
/// batch norm at identity. Deterministic in `seed`.
ModelParams init_params(std::size_t num_entities, std::size_t num_relations, std::size_t d,
                        std::size_t k, std::uint64_t seed);

/// core x_1 e_h x_2 w_r x_3 e_t, with no batch norm or dropout.
Real score_tucker(const ModelParams& p, EntityId h, RelationId r, EntityId t);

/// w_r . (core x_1 e_h x_3 e_t): the same trilinear form contracted with the
/// relation last.
Real score_tucker_relation_last(const ModelParams& p, EntityId h, RelationId r, EntityId t);

/// e_t . act(core x_1 e_h x_2 w_r), with no batch norm or dropout.
Real score_neptune(const ModelParams& p, EntityId h, RelationId r, EntityId t, Activation act);

/// w_r . act(core x_1 e_h x_3 e_t): the shared-core neural-tensor form, where
/// the activation acts on a relation-space vector.
Real score_ntn_form(const Tensor3& core, std::span<const Real> w_r, std::span<const Real> e_h,
                    std::span<const Real> e_t, Activation act);

/// core x_2 w_r as a d x d matrix indexed (head, tail).
Matrix relation_core(const Tensor3& core, std::span<const Real> w_r);

/// Dropout rates at the three sites of the pipeline plus the batch-norm
/// switch. `none()` turns the pipeline into the bare scoring function.
struct Regularizers {
  Real input_dropout = 0.0;
  Real hidden1_dropout = 0.0;
  Real hidden2_dropout = 0.0;
  bool batch_norm = true;

  static Regularizers none() { return {0.0, 0.0, 0.0, false}; }

  friend bool operator==(const Regularizers&, const Regularizers&) = default;
};

struct DropoutResult {
  Vector output;
  Vector mask;  // 1 where the entry was kept, 0 where dropped
  Real scale = 1.0;
};

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Eval mode is the identity.
/// rate == 1 drops everything.
DropoutResult dropout_forward(std::span<const Real> x, Real rate, Mode mode, Rng& rng);

struct BatchNormCache {
  Matrix normalized;  // x_hat, B x features
  Vector inv_std;
};

/// x is B x features. Train mode normalizes with batch statistics (biased
/// variance) and folds them into the running statistics (unbiased variance
/// when B > 1); eval mode uses the running statistics.
Matrix batch_norm_forward(BatchNormState& state, const Matrix& x, Mode mode,
                          BatchNormCache* cache = nullptr);

struct Query {
  EntityId head = 0;
  RelationId relation = 0;

  friend bool operator==(const Query&, const Query&) = default;
};

/// Intermediates of one batched forward pass, kept for backpropagation.
struct ForwardPass {
  std::vector<Query> rows;
  std::vector<RelationId> relations;     // distinct relations in the batch
  std::vector<std::size_t> relation_of;  // row -> index into relations / cores
  std::vector<Matrix> cores;             // relation_core() per distinct relation

  Matrix mask_input, mask_hidden1, mask_hidden2;  // B x d, 0/1
  Real scale_input = 1.0, scale_hidden1 = 1.0, scale_hidden2 = 1.0;

  bool batch_norm = true;
  Matrix bn_input_in;  // after input dropout
  BatchNormCache bn_input_cache;
  Matrix head_repr;  // after BN_input
  Matrix hidden;     // A x_1 head_repr, before hidden dropout 1
  BatchNormCache bn_hidden_cache;
  Matrix pre_activation;  // after BN_hidden
  Matrix output;          // b, after hidden dropout 2
  Matrix logits;          // B x |E|
};

/// Runs the regularized pipeline for every query. Train mode consumes `rng`
/// for dropout masks and updates the batch-norm running statistics in `p`.
ForwardPass forward_batch(ModelParams& p, std::span<const Query> rows, Activation act,
                          Mode mode, const Regularizers& reg, Rng& rng);

/// Eval-mode forward; does not touch `p`.
Matrix score_queries(const ModelParams& p, std::span<const Query> rows, Activation act,
                     const Regularizers& reg = {});

/// Scores of every tail for (h, r) through the regularized pipeline.
Vector score_all_tails(ModelParams& p, EntityId h, RelationId r, Activation act, Mode mode,
                       const Regularizers& reg, Rng& rng);

/// Eval-mode overload; read-only over `p`.
Vector score_all_tails(const ModelParams& p, EntityId h, RelationId r, Activation act,
                       const Regularizers& reg = {});

}  // namespace neptune
