#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "neptune/kg.hpp"

namespace neptune {

struct SyntheticSpec {
  std::size_t entities = 64;
  std::size_t relations = 8;
  std::size_t triples = 512;
  /// valid/test are drawn from the training triples (a memorization check).
  std::size_t heldout = 32;
  std::uint64_t seed = 7;
};

struct SyntheticSplits {
  std::vector<RawTriple> train, valid, test;
};

/// Distinct uniformly random triples over labels e0.., r0..; deterministic in seed.
SyntheticSplits make_synthetic(const SyntheticSpec& spec);

/// Writes train.txt, valid.txt and test.txt into `dir` (created if missing).
void write_synthetic(const std::filesystem::path& dir, const SyntheticSplits& s);

}  // namespace neptune
