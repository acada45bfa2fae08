#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mal {

using Rng = std::mt19937_64;

/// Independent stream keyed by (seed, tags...). Used to give each image,
/// epoch or identity its own generator so results do not depend on the
/// order or thread in which work items run.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Uniform double in [lo, hi).
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);
bool bernoulli(Rng& rng, double p);
double normal(Rng& rng, double mean, double stddev);

}  // namespace mal
