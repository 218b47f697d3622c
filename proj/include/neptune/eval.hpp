#pragma once

// Filtered ranking: MRR and Hits@{1,3,10} with pessimistic tie-breaking.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "neptune/kg.hpp"
#include "neptune/model.hpp"

namespace neptune {

struct RankedTriple {
  Triple triple;
  std::size_t rank = 0;
};

struct RankingReport {
  std::string split;
  std::vector<RankedTriple> per_triple_ranks;
  Real mrr = 0.0;
  std::map<int, Real> hits;  // n -> fraction of ranks <= n, for n in {1, 3, 10}
  std::size_t triple_count = 0;
};

/// 1 + #(unfiltered competitors scoring above the true tail)
///   + #(unfiltered competitors tying with it).
/// `filtered` must not contain `true_tail`.
std::size_t filtered_rank(std::span<const Real> scores, EntityId true_tail,
                          std::span<const EntityId> filtered);

/// Eval-mode rank of `triple.tail` among all entities for (head, relation).
std::size_t rank_triple(const ModelParams& p, const KnowledgeGraph& g, const Triple& triple,
                        Activation act);

/// Aggregates MRR (compensated sum) and Hits@{1,3,10} from ranks.
RankingReport summarize(std::string split, std::vector<RankedTriple> ranks);

struct EvalOptions {
  /// Queries sharing a relation are scored together, reusing core x_2 w_r.
  std::size_t batch_size = 256;
  /// Worker threads; results do not depend on this.
  std::size_t threads = 1;
};

/// Ranks every augmented triple of the split, so both head and tail
/// prediction of each raw triple are covered.
RankingReport evaluate(const ModelParams& p, const KnowledgeGraph& g, Split split,
                       Activation act, const EvalOptions& opts = {});
RankingReport evaluate(const ModelParams& p, const KnowledgeGraph& g,
                       std::span<const Triple> triples, std::string split_name,
                       Activation act, const EvalOptions& opts = {});

/// `split=<name> mrr=<f> hits1=<f> hits3=<f> hits10=<f> n=<count>`
std::string format_report(const RankingReport& r);

/// head, relation, tail labels and rank, tab-separated, one line per triple.
void write_rank_dump(std::ostream& out, const RankingReport& r, const KnowledgeGraph& g);

}  // namespace neptune
