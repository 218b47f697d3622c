#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "neptune/checkpoint.hpp"
#include "neptune/errors.hpp"
#include "neptune/synthetic.hpp"
#include "neptune/training.hpp"
#include "oracles.hpp"

using namespace neptune;

namespace {

TrainConfig small_config(std::size_t d, std::size_t k) {
  TrainConfig c;
  c.d = d;
  c.k = k;
  c.input_dropout = c.hidden1_dropout = c.hidden2_dropout = 0.0;
  c.lr = 0.01;
  c.epochs = 1;
  c.batch_size = 32;
  return c;
}

LossBatch random_batch(std::size_t ne, std::size_t nr, std::size_t rows, std::mt19937_64& rng) {
  std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(ne - 1));
  std::uniform_int_distribution<RelationId> rel(0, static_cast<RelationId>(nr - 1));
  LossBatch b;
  for (std::size_t i = 0; i < rows; ++i) {
    b.rows.push_back({ent(rng), rel(rng)});
    std::vector<EntityId> t{ent(rng)};
    if (rng() % 2) t.push_back(ent(rng));
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    b.targets.push_back(t);
  }
  return b;
}

double naive_bce(std::span<const double> logits, std::span<const EntityId> targets, double s) {
  double total = 0;
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double y = std::find(targets.begin(), targets.end(), i) != targets.end() ? 1.0 : 0.0;
    if (s > 0) y = y * (1 - s) + s / n;
    const double p = 1 / (1 + std::exp(-logits[i]));
    total -= y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  return total;
}

KnowledgeGraph synthetic_graph(std::size_t ne, std::size_t nr, std::size_t nt, std::uint64_t seed) {
  const auto s = make_synthetic({ne, nr, nt, 8, seed});
  return build_graph(s.train, s.valid, s.test);
}

}  // namespace

TEST(Loss1N, AllZeroLogits) {
  const std::vector<double> logits(3, 0.0);
  EXPECT_NEAR(loss_1n(logits, std::vector<EntityId>{0}), 3 * std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_1n(logits, std::vector<EntityId>{0}), 2.0794, 1e-4);
}

TEST(Loss1N, PerfectFitLimitAndNoOverflow) {
  const std::vector<EntityId> all{0, 1, 2, 3};
  EXPECT_LT(loss_1n(std::vector<double>(4, 40.0), all), 1e-16);
  EXPECT_EQ(loss_1n(std::vector<double>(4, 1000.0), all), 0.0);
  const double big = loss_1n(std::vector<double>{-1000.0, 1000.0}, std::vector<EntityId>{0});
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 2000.0, 1e-9);
}

TEST(Loss1N, MatchesNaiveFormula) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(17);
    for (auto& x : logits) x = n(rng);
    std::vector<EntityId> targets{static_cast<EntityId>(rng() % 17), static_cast<EntityId>(rng() % 17)};
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (double s : {0.0, 0.1}) {
      const double ref = naive_bce(logits, targets, s);
      EXPECT_NEAR(loss_1n(logits, targets, s), ref, 1e-12 * std::max(1.0, ref));
    }
  }
}

TEST(ForwardBackward, ZeroCoreGradientIsAnOuterProduct) {
  // Bare pipeline, zero core: every logit is 0, so dL/dPhi_i = 1/2 - y_i and
  // dL/dcore[i,j,l] = e_h[i] w_r[j] sum_t E[t,l] (1/2 - y_t).
  for (auto [d, k] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 3}}) {
    ModelParams p = init_params(5, 2, d, k, 3);
    p.core.fill(0.0);
    TrainConfig cfg = small_config(d, k);
    cfg.batch_norm = false;
    cfg.activation = Activation::identity;
    LossBatch batch{{{1, 0}}, {{2, 4}}};
    Rng rng(0);
    const StepResult r = forward_backward(p, batch, cfg, rng);
    EXPECT_NEAR(r.loss, 5 * std::log(2.0), 1e-14);
    std::vector<double> g(d, 0.0);
    for (EntityId t = 0; t < 5; ++t) {
      const double y = (t == 2 || t == 4) ? 1.0 : 0.0;
      for (std::size_t l = 0; l < d; ++l) g[l] += p.entity_emb(t, l) * (0.5 - y);
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t l = 0; l < d; ++l) {
          EXPECT_NEAR(r.grads.core(i, j, l), p.entity_emb(1, i) * p.relation_emb(0, j) * g[l], 1e-14);
        }
    for (double x : r.grads.entity_emb.span()) EXPECT_EQ(x, 0.0);
    for (double x : r.grads.relation_emb.span()) EXPECT_EQ(x, 0.0);
  }
}

TEST(ForwardBackward, UntouchedRelationRowHasZeroGradient) {
  ModelParams p = init_params(10, 4, 4, 4, 8);
  TrainConfig cfg = small_config(4, 4);
  LossBatch batch{{{0, 1}, {3, 1}, {5, 2}}, {{1}, {2, 7}, {9}}};
  Rng rng(0);
  const StepResult r = forward_backward(p, batch, cfg, rng);
  for (RelationId rel : {0u, 3u}) {
    for (double x : r.grads.relation_emb.row(rel)) EXPECT_EQ(x, 0.0);
  }
  double touched = 0;
  for (double x : r.grads.relation_emb.row(1)) touched += std::abs(x);
  EXPECT_GT(touched, 0.0);
}

// Analytic gradients against central differences of the batch loss, with
// batch norm in train mode (batch statistics differentiated through).
class GradientCheck : public ::testing::TestWithParam<Activation> {};

TEST_P(GradientCheck, AllParameterGroupsMatchCentralDifferences) {
  const std::size_t ne = 10, nr = 3, d = 4, k = 4;
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParams p = init_params(ne, nr, d, k, seed);
    // Move batch norm away from its identity state so scale/shift matter.
    oracle::fill_random(p.bn_input.scale.span(), rng, 0.5, 1.5);
    oracle::fill_random(p.bn_input.shift.span(), rng, -0.5, 0.5);
    oracle::fill_random(p.bn_hidden.scale.span(), rng, 0.5, 1.5);
    oracle::fill_random(p.bn_hidden.shift.span(), rng, -0.5, 0.5);
    TrainConfig cfg = small_config(d, k);
    cfg.activation = GetParam();
    cfg.label_smoothing = seed % 2 ? 0.1 : 0.0;
    const LossBatch batch = random_batch(ne, nr, 6, rng);

    ModelParams work = p;
    Rng r0(0);
    const StepResult res = forward_backward(work, batch, cfg, r0);

    ModelParams probe = p;
    auto loss = [&] {
      ModelParams scratch = probe;  // running-stat updates must not leak
      Rng rr(0);
      return forward_backward(scratch, batch, cfg, rr).loss;
    };
    auto params = trainable_groups(probe);
    const auto grads = gradient_groups(res.grads);
    for (std::size_t g = 0; g < kParamGroups; ++g) {
      double worst = 0;
      for (std::size_t i = 0; i < params[g].size(); ++i) {
        const double fd = oracle::central_difference(loss, params[g][i], h);
        const double an = grads[g][i];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
      }
      EXPECT_LE(worst, 1e-4) << "seed " << seed << " group " << g;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, GradientCheck,
                         ::testing::Values(Activation::relu, Activation::tanh, Activation::identity));

TEST(ForwardBackward, DroppedCoordinatesCarryNoGradient) {
  ModelParams p = init_params(12, 3, 6, 4, 2);
  TrainConfig cfg = small_config(6, 4);
  cfg.input_dropout = 0.5;
  cfg.hidden1_dropout = 0.5;
  cfg.hidden2_dropout = 0.5;
  std::mt19937_64 brng(1);
  const LossBatch batch = random_batch(12, 3, 5, brng);

  ModelParams p1 = p, p2 = p;
  Rng rng1(77), rng2(77);
  const StepResult a = forward_backward(p1, batch, cfg, rng1);
  const StepResult b = forward_backward(p2, batch, cfg, rng2);
  EXPECT_EQ(a.pass.mask_input, b.pass.mask_input);
  EXPECT_EQ(a.pass.mask_hidden1, b.pass.mask_hidden1);
  EXPECT_EQ(a.grads.core, b.grads.core);
  EXPECT_EQ(a.loss, b.loss);

  std::size_t dropped = 0;
  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      if (a.pass.mask_input(r, c) == 0.0) {
        ++dropped;
        EXPECT_EQ(a.head_input_grad(r, c), 0.0);
      } else {
        EXPECT_EQ(a.pass.bn_input_in(r, c), p.entity_emb(batch.rows[r].head, c) * 2.0);
      }
      if (a.pass.mask_hidden2(r, c) == 0.0) {
        EXPECT_EQ(a.pass.output(r, c), 0.0);
      }
    }
  }
  EXPECT_GT(dropped, 0u);
}

TEST(ForwardBackward, NonFiniteLossAborts) {
  ModelParams p = init_params(5, 2, 3, 3, 1);
  p.entity_emb(2, 1) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = small_config(3, 3);
  LossBatch batch{{{0, 0}, {1, 1}}, {{1}, {2}}};
  Rng rng(0);
  EXPECT_THROW(forward_backward(p, batch, cfg, rng), NumericalError);
}

TEST(ForwardBackward, EntityPermutationPermutesTheUpdates) {
  const std::size_t ne = 9, nr = 4, d = 5, k = 3;
  ModelParams p = init_params(ne, nr, d, k, 12);
  std::vector<EntityId> perm(ne);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  ModelParams q = p;
  for (EntityId e = 0; e < ne; ++e) {
    std::copy(p.entity_emb.row(e).begin(), p.entity_emb.row(e).end(), q.entity_emb.row(perm[e]).begin());
  }
  TrainConfig cfg = small_config(d, k);
  cfg.input_dropout = 0.2;
  cfg.hidden2_dropout = 0.3;
  AdamState sp = AdamState::zeros_like(p), sq = AdamState::zeros_like(q);
  Rng rp(5), rq(5);
  std::mt19937_64 brng(8);
  for (int step = 0; step < 4; ++step) {
    const LossBatch bp = random_batch(ne, nr, 4, brng);
    LossBatch bq = bp;
    for (auto& row : bq.rows) row.head = perm[row.head];
    for (auto& t : bq.targets) {
      for (auto& e : t) e = perm[e];
      std::sort(t.begin(), t.end());
    }
    const auto gp = forward_backward(p, bp, cfg, rp);
    const auto gq = forward_backward(q, bq, cfg, rq);
    EXPECT_NEAR(gp.loss, gq.loss, 1e-12);
    adam_step(p, gp.grads, sp, cfg.lr);
    adam_step(q, gq.grads, sq, cfg.lr);
  }
  for (EntityId e = 0; e < ne; ++e)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(p.entity_emb(e, c), q.entity_emb(perm[e], c), 1e-10);
  for (std::size_t i = 0; i < p.core.size(); ++i) EXPECT_NEAR(p.core.span()[i], q.core.span()[i], 1e-10);
}

TEST(AdamStep, ZeroGradientFromFreshStateLeavesParams) {
  ModelParams p = init_params(4, 2, 3, 2, 0);
  const ModelParams before = p;
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, GradientSet::zeros_like(p), s, 0.1);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamStep, MomentsDecayUnderZeroGradient) {
  ModelParams p = init_params(4, 2, 3, 2, 0);
  AdamState s = AdamState::zeros_like(p);
  GradientSet g = GradientSet::zeros_like(p);
  g.core.fill(0.5);
  adam_step(p, g, s, 0.01);
  const double m1 = s.first[2][0], v1 = s.second[2][0];
  adam_step(p, GradientSet::zeros_like(p), s, 0.01);
  EXPECT_DOUBLE_EQ(s.first[2][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(s.second[2][0], 0.999 * v1);
  EXPECT_GE(s.second[2][0], 0.0);
}

TEST(AdamStep, FirstStepMovesEachCoordinateByAboutLr) {
  ModelParams p = init_params(6, 2, 3, 2, 0);
  const ModelParams before = p;
  AdamState s = AdamState::zeros_like(p);
  GradientSet g = GradientSet::zeros_like(p);
  std::mt19937_64 rng(1);
  oracle::fill_random(g.entity_emb.span(), rng, -3, 3);
  adam_step(p, g, s, 1e-3);
  for (std::size_t i = 0; i < p.entity_emb.size(); ++i) {
    const double delta = p.entity_emb.span()[i] - before.entity_emb.span()[i];
    const double gi = g.entity_emb.span()[i];
    EXPECT_NEAR(delta, -1e-3 * gi / (std::abs(gi) + 1e-8), 1e-12);
  }
}

TEST(AdamStep, QuadraticHandTrace) {
  // minimize (x - 3)^2 from x = 0 with lr 0.1; reference values from a
  // hand-stepped bias-corrected Adam recurrence.
  ModelParams p = init_params(1, 1, 1, 1, 0);
  p.entity_emb(0, 0) = 0.0;
  AdamState s = AdamState::zeros_like(p);
  const double expect[3] = {0.09999999983333335, 0.19989729258521102, 0.29961847654925267};
  for (double e : expect) {
    GradientSet g = GradientSet::zeros_like(p);
    g.entity_emb(0, 0) = 2 * (p.entity_emb(0, 0) - 3);
    adam_step(p, g, s, 0.1);
    EXPECT_NEAR(p.entity_emb(0, 0), e, 1e-15);
  }
}

TEST(AdamStep, ShapeMismatchThrows) {
  ModelParams p = init_params(4, 2, 3, 2, 0);
  AdamState s = AdamState::zeros_like(init_params(5, 2, 3, 2, 0));
  EXPECT_THROW(adam_step(p, GradientSet::zeros_like(p), s, 0.1), ContractViolation);
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
  const KnowledgeGraph g = synthetic_graph(20, 3, 60, 1);
  TrainConfig cfg = small_config(4, 4);
  cfg.epochs = 0;
  const TrainResult r = train(g, cfg);
  EXPECT_EQ(r.params, init_params(g.num_entities(), g.num_relations(), 4, 4, cfg.seed));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, SameSeedGivesIdenticalCheckpointBytes) {
  const KnowledgeGraph g = synthetic_graph(24, 3, 80, 2);
  TrainConfig cfg = small_config(6, 5);
  cfg.epochs = 5;
  cfg.input_dropout = 0.2;
  cfg.hidden1_dropout = 0.3;
  cfg.hidden2_dropout = 0.3;
  const TrainResult a = train(g, cfg);
  const TrainResult b = train(g, cfg);
  EXPECT_EQ(serialize_checkpoint(make_checkpoint(a.params, a.adam, cfg, &g)),
            serialize_checkpoint(make_checkpoint(b.params, b.adam, cfg, &g)));
  cfg.seed += 1;
  const TrainResult c = train(g, cfg);
  EXPECT_FALSE(c.params == a.params);
}

TEST(Train, LossFallsAndLogIsWellFormed) {
  const KnowledgeGraph g = synthetic_graph(30, 3, 120, 3);
  TrainConfig cfg = small_config(16, 16);
  cfg.epochs = 40;
  cfg.valid_every = 20;
  cfg.keep_best = true;
  std::size_t calls = 0;
  const TrainResult r = train(g, cfg, [&](const EpochLog&) { ++calls; });
  ASSERT_EQ(r.log.size(), 40u);
  EXPECT_EQ(calls, 40u);
  EXPECT_LT(r.log.back().mean_loss, 0.2 * r.log.front().mean_loss);
  EXPECT_TRUE(r.log[19].valid_mrr.has_value());
  EXPECT_FALSE(r.log[18].valid_mrr.has_value());
  EXPECT_TRUE(r.best.has_value());
  EXPECT_TRUE(r.params.all_finite());
  EXPECT_EQ(format_epoch_log({3, 0.5, std::nullopt}), "3\t0.5\t");
  EXPECT_EQ(format_epoch_log({4, 0.25, 0.75}), "4\t0.25\t0.75");
}

TEST(Train, ResumingContinuesFromState) {
  const KnowledgeGraph g = synthetic_graph(20, 2, 50, 4);
  TrainConfig cfg = small_config(4, 4);
  cfg.epochs = 3;
  const TrainResult first = train(g, cfg);
  const TrainResult more = train(g, cfg, first.params, first.adam);
  EXPECT_GT(more.adam.step, first.adam.step);
  EXPECT_LT(more.log.back().mean_loss, first.log.front().mean_loss);
  ModelParams wrong = init_params(3, 2, 4, 4, 0);
  EXPECT_THROW(train(g, cfg, wrong, AdamState::zeros_like(wrong)), ContractViolation);
}

TEST(TrainConfig, KeyValueRoundTripAndErrors) {
  TrainConfig c;
  c.lr = 0.0123;
  c.activation = Activation::tanh;
  c.batch_norm = false;
  c.seed = 99;
  EXPECT_EQ(parse_key_values(to_key_values(c)), c);
  EXPECT_EQ(parse_key_values("# comment\n\nepochs = 3\n").epochs, 3u);
  EXPECT_THROW(parse_key_values("bogus = 1"), ContractViolation);
  EXPECT_THROW(parse_key_values("lr = fast"), ContractViolation);
  EXPECT_THROW(parse_key_values("lr 0.1"), ContractViolation);
  TrainConfig bad;
  bad.lr_decay = 1.5;
  EXPECT_THROW(bad.validate(), ContractViolation);
  bad = {};
  bad.input_dropout = 1.0;
  EXPECT_THROW(bad.validate(), ContractViolation);
}

TEST(GroupTrainingRows, OneRowPerHeadRelationWithAllTails) {
  const std::vector<RawTriple> train{{"a", "r", "b"}, {"a", "r", "c"}, {"b", "r", "c"}};
  const KnowledgeGraph g = build_graph(train, {}, {});
  const LossBatch rows = group_training_rows(g);
  // (a,r) (b,r) (b,r^-1) (c,r^-1)
  ASSERT_EQ(rows.rows.size(), 4u);
  const EntityId a = 0, b = 1, c = 2;
  EXPECT_EQ(rows.rows[0], (Query{a, 0}));
  EXPECT_EQ(rows.targets[0], (std::vector<EntityId>{b, c}));
  std::size_t total = 0;
  for (const auto& t : rows.targets) total += t.size();
  EXPECT_EQ(total, g.split(Split::train).size());
}
