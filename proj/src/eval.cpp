#include "neptune/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include "neptune/errors.hpp"

namespace neptune {

std::size_t filtered_rank(std::span<const Real> scores, EntityId true_tail,
                          std::span<const EntityId> filtered) {
  if (true_tail >= scores.size()) {
    throw ContractViolation("filtered_rank: true tail " + std::to_string(true_tail) +
                            " out of range");
  }
  const Real target = scores[true_tail];
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != true_tail && scores[i] >= target) ++ahead;
  }
  // Filtered ids are sorted and unique (they come from the filter index);
  // take them back out of the count.
  for (EntityId f : filtered) {
    if (f != true_tail && f < scores.size() && scores[f] >= target) --ahead;
  }
  return ahead + 1;
}

std::size_t rank_triple(const ModelParams& p, const KnowledgeGraph& g, const Triple& triple,
                        Activation act) {
  if (triple.tail >= p.num_entities()) {
    throw ContractViolation("rank_triple: tail id out of range");
  }
  const Vector scores = score_all_tails(p, triple.head, triple.relation, act);
  const auto filtered = candidate_filter(g, triple.head, triple.relation, triple.tail);
  return filtered_rank(scores.span(), triple.tail, filtered);
}

RankingReport summarize(std::string split, std::vector<RankedTriple> ranks) {
  RankingReport r;
  r.split = std::move(split);
  r.triple_count = ranks.size();
  // Neumaier summation.
  Real sum = 0.0, comp = 0.0;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  for (const auto& rt : ranks) {
    const Real x = 1.0 / static_cast<Real>(rt.rank);
    const Real t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
    h1 += rt.rank <= 1;
    h3 += rt.rank <= 3;
    h10 += rt.rank <= 10;
  }
  const Real n = static_cast<Real>(ranks.size());
  if (!ranks.empty()) {
    r.mrr = (sum + comp) / n;
    r.hits[1] = static_cast<Real>(h1) / n;
    r.hits[3] = static_cast<Real>(h3) / n;
    r.hits[10] = static_cast<Real>(h10) / n;
  } else {
    r.hits[1] = r.hits[3] = r.hits[10] = 0.0;
  }
  r.per_triple_ranks = std::move(ranks);
  return r;
}

RankingReport evaluate(const ModelParams& p, const KnowledgeGraph& g, Split split,
                       Activation act, const EvalOptions& opts) {
  return evaluate(p, g, g.split(split), std::string(to_string(split)), act, opts);
}

RankingReport evaluate(const ModelParams& p, const KnowledgeGraph& g,
                       std::span<const Triple> triples, std::string split_name, Activation act,
                       const EvalOptions& opts) {
  p.validate();
  for (const auto& t : triples) {
    if (t.head >= p.num_entities() || t.tail >= p.num_entities() ||
        t.relation >= p.num_relations()) {
      throw ContractViolation("evaluate: triple ids out of range for the model");
    }
  }

  // Order queries by relation so each chunk reuses one relation core.
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return triples[a].relation < triples[b].relation;
  });
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    const RelationId r = triples[order[s]].relation;
    while (e < order.size() && e - s < batch && triples[order[e]].relation == r) ++e;
    chunks.emplace_back(s, e);
    s = e;
  }

  std::vector<RankedTriple> ranks(triples.size());
  auto work = [&](std::size_t first_chunk, std::size_t stride) {
    std::vector<Query> queries;
    for (std::size_t c = first_chunk; c < chunks.size(); c += stride) {
      const auto [s, e] = chunks[c];
      queries.clear();
      for (std::size_t i = s; i < e; ++i) {
        queries.push_back({triples[order[i]].head, triples[order[i]].relation});
      }
      const Matrix scores = score_queries(p, queries, act);
      for (std::size_t i = s; i < e; ++i) {
        const Triple& t = triples[order[i]];
        const auto filtered = candidate_filter(g, t.head, t.relation, t.tail);
        ranks[order[i]] = {t, filtered_rank(scores.row(i - s), t.tail, filtered)};
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, chunks.size()));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  return summarize(std::move(split_name), std::move(ranks));
}

std::string format_report(const RankingReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "split=%s mrr=%.6f hits1=%.6f hits3=%.6f hits10=%.6f n=%zu",
                r.split.c_str(), r.mrr, r.hits.at(1), r.hits.at(3), r.hits.at(10),
                r.triple_count);
  return buf;
}

void write_rank_dump(std::ostream& out, const RankingReport& r, const KnowledgeGraph& g) {
  for (const auto& rt : r.per_triple_ranks) {
    out << g.entities().label(rt.triple.head) << '\t' << g.relations().label(rt.triple.relation)
        << '\t' << g.entities().label(rt.triple.tail) << '\t' << rt.rank << '\n';
  }
}

}  // namespace neptune
