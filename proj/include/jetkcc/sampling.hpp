#pragma once

#include <cstdint>
#include <utility>

#include "jetkcc/jetgeom.hpp"

namespace jetkcc {

/// Closed box [lo, hi] for one coordinate family.
struct Interval {
  double lo;
  double hi;
};

/// Deterministic, index-addressed point generator. Point k depends only on
/// (seed, k), so parallel or reordered sampling produces the same points.
class PointSampler {
 public:
  PointSampler(int m, int n, std::uint64_t seed, Interval t_box = {-1.0, 1.0},
               Interval x_box = {-1.0, 1.0}, Interval v_box = {-2.0, 2.0});

  JetPoint point(std::uint64_t index) const;
  std::uint64_t seed() const { return seed_; }

 private:
  int m_;
  int n_;
  std::uint64_t seed_;
  Interval t_box_;
  Interval x_box_;
  Interval v_box_;
};

/// splitmix64 step; exposed for tests of the stream layout.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace jetkcc
