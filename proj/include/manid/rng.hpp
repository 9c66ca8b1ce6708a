#pragma once

#include <random>

namespace manid {

/// Every seeded component draws from this engine.
using Rng = std::mt19937_64;

}  // namespace manid
