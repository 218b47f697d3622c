#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace neptune {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose ("init", "shuffle", "dropout")
/// derived from one run seed. Changing one stream never perturbs another.
Rng make_stream(std::uint64_t seed, std::string_view name);

}  // namespace neptune
