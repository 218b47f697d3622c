#include "neptune/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "neptune/errors.hpp"
#include "neptune/rng.hpp"

namespace neptune {

SyntheticSplits make_synthetic(const SyntheticSpec& spec) {
  if (spec.entities == 0 || spec.relations == 0) {
    throw ContractViolation("make_synthetic: need at least one entity and relation");
  }
  if (spec.triples > spec.entities * spec.relations * spec.entities) {
    throw ContractViolation("make_synthetic: more triples requested than exist");
  }
  Rng rng = make_stream(spec.seed, "synthetic");
  std::uniform_int_distribution<std::size_t> ent(0, spec.entities - 1);
  std::uniform_int_distribution<std::size_t> rel(0, spec.relations - 1);

  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  SyntheticSplits out;
  while (out.train.size() < spec.triples) {
    const auto h = ent(rng), r = rel(rng), t = ent(rng);
    if (!seen.emplace(h, r, t).second) continue;
    out.train.push_back({"e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t)});
  }
  std::vector<RawTriple> pool = out.train;
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::size_t n = std::min(spec.heldout, pool.size() / 2);
  out.valid.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  out.test.assign(pool.begin() + static_cast<std::ptrdiff_t>(n),
                  pool.begin() + static_cast<std::ptrdiff_t>(2 * n));
  return out;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticSplits& s) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* name, const std::vector<RawTriple>& triples) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  };
  dump("train.txt", s.train);
  dump("valid.txt", s.valid);
  dump("test.txt", s.test);
}

}  // namespace neptune
