#pragma once

#include <random>

namespace pignet {

// 64-bit Mersenne twister: bit-identical sequences on every platform.
using Rng = std::mt19937_64;

}  // namespace pignet
