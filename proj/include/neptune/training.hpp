#pragma once

// 1-N binary cross-entropy training with hand-derived gradients and Adam.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neptune/kg.hpp"
#include "neptune/model.hpp"

namespace neptune {

struct TrainConfig {
  std::size_t d = 200;
  std::size_t k = 200;
  Real lr = 5e-4;
  Real lr_decay = 1.0;
  std::size_t epochs = 1000;
  std::size_t batch_size = 128;
  Real input_dropout = 0.3;
  Real hidden1_dropout = 0.4;
  Real hidden2_dropout = 0.5;
  bool batch_norm = true;
  Real label_smoothing = 0.0;
  Activation activation = Activation::relu;
  std::uint64_t seed = 20;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  /// Validation MRR every N epochs; 0 disables.
  std::size_t valid_every = 0;
  /// Keep the parameters with the best validation MRR (needs valid_every > 0).
  bool keep_best = false;

  Regularizers regularizers() const {
    return {input_dropout, hidden1_dropout, hidden2_dropout, batch_norm};
  }

  /// Throws ContractViolation on out-of-range values.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// `key = value` lines, one per field, in declaration order.
std::string to_key_values(const TrainConfig& cfg);
/// Sets one field by name; throws ContractViolation on unknown keys or bad values.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
TrainConfig parse_key_values(std::string_view text);

/// One 1-N row per (head, relation) with its multi-hot tail set.
struct LossBatch {
  std::vector<Query> rows;
  std::vector<std::vector<EntityId>> targets;
};

/// Groups the augmented training split by (head, relation), ordered by key.
LossBatch group_training_rows(const KnowledgeGraph& g);

struct GradientSet {
  Matrix entity_emb;
  Matrix relation_emb;
  Tensor3 core;
  Vector bn_input_scale, bn_input_shift;
  Vector bn_hidden_scale, bn_hidden_shift;

  static GradientSet zeros_like(const ModelParams& p);
  bool all_finite() const;
};

inline constexpr std::size_t kParamGroups = 7;

/// Trainable parameter groups in a fixed order: entity, relation, core,
/// bn_input scale/shift, bn_hidden scale/shift.
std::array<std::span<Real>, kParamGroups> trainable_groups(ModelParams& p);
std::array<std::span<const Real>, kParamGroups> trainable_groups(const ModelParams& p);
std::array<std::span<const Real>, kParamGroups> gradient_groups(const GradientSet& g);

struct AdamState {
  std::array<std::vector<Real>, kParamGroups> first;
  std::array<std::vector<Real>, kParamGroups> second;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& p);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Sum over all entities of the binary cross-entropy of sigmoid(logits)
/// against the multi-hot targets, computed in logit form. With smoothing s
/// the targets become y (1 - s) + s / |E|.
Real loss_1n(std::span<const Real> logits, std::span<const EntityId> targets,
             Real label_smoothing = 0.0);

struct StepResult {
  Real loss = 0.0;  // mean of the per-row 1-N losses
  GradientSet grads;
  ForwardPass pass;
  /// Gradient reaching each row's head embedding through the input path only
  /// (excludes the contribution from scoring it as a candidate tail).
  Matrix head_input_grad;
};

/// Forward pass through the full pipeline and exact gradients for every
/// trainable parameter. Train mode: consumes `rng` for dropout and updates
/// batch-norm running statistics in `p`. Throws NumericalError on a
/// non-finite loss or gradient.
StepResult forward_backward(ModelParams& p, const LossBatch& batch, const TrainConfig& cfg,
                            Rng& rng);

/// Bias-corrected Adam, in place.
void adam_step(ModelParams& p, const GradientSet& g, AdamState& s, Real lr, Real beta1 = 0.9,
               Real beta2 = 0.999, Real eps = 1e-8);

struct EpochLog {
  std::size_t epoch = 0;
  Real mean_loss = 0.0;
  std::optional<Real> valid_mrr;
};

/// `epoch<TAB>mean_loss<TAB>valid_mrr` (last field empty when not evaluated).
std::string format_epoch_log(const EpochLog& e);

struct TrainResult {
  ModelParams params;
  AdamState adam;
  std::vector<EpochLog> log;
  std::optional<ModelParams> best;
  Real best_valid_mrr = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Single-threaded and deterministic given cfg.seed. Dropout draws come from
/// the "dropout" stream, epoch shuffles from "shuffle", initialization from
/// "init".
TrainResult train(const KnowledgeGraph& g, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Continues from existing parameters and optimizer state.
TrainResult train(const KnowledgeGraph& g, const TrainConfig& cfg, ModelParams params,
                  AdamState adam, const EpochCallback& on_epoch = {});

}  // namespace neptune
