#pragma once

#include <cstdint>
#include <random>

#include "masksparsity/tensor.hpp"

namespace masksparsity {

/// splitmix64 step; used to derive independent seed streams from one seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
void fill_normal(TensorT<T>& t, std::mt19937_64& rng, double stddev, double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(TensorT<T>& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace masksparsity
