#include "jetkcc/sampling.hpp"

namespace jetkcc {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PointSampler::PointSampler(int m, int n, std::uint64_t seed, Interval t_box, Interval x_box,
                           Interval v_box)
    : m_(m), n_(n), seed_(seed), t_box_(t_box), x_box_(x_box), v_box_(v_box) {
  for (const Interval& box : {t_box, x_box, v_box}) {
    if (!(box.lo <= box.hi)) throw PreconditionError("sampling box has lo > hi");
  }
}

JetPoint PointSampler::point(std::uint64_t index) const {
  std::uint64_t state = seed_;
  std::uint64_t stream = splitmix64(state) ^ (index * 0xd1b54a32d192ed03ULL);
  auto uniform = [&](Interval box) {
    const double u = static_cast<double>(splitmix64(stream) >> 11) * 0x1.0p-53;
    return box.lo + (box.hi - box.lo) * u;
  };
  JetPoint p(m_, n_);
  for (auto& t : p.t()) t = uniform(t_box_);
  for (auto& x : p.x()) x = uniform(x_box_);
  for (auto& v : p.v().flat()) v = uniform(v_box_);
  return p;
}

}  // namespace jetkcc
