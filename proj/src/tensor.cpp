#include "jetkcc/tensor.hpp"

namespace jetkcc {

NumArray evaluate(const ExprArray& a, const Bindings& b) { return CompiledArray(a).evaluate(b); }

CompiledArray::CompiledArray(const ExprArray& a) : shape_(a.shape()), tape_(a.flat()) {}

NumArray CompiledArray::evaluate(const Bindings& b) const {
  NumArray out(shape_);
  tape_.evaluate(b, out.flat());
  return out;
}

IndexSignature::IndexSignature(std::vector<IndexSlot> slots, std::vector<std::pair<int, int>> pairs)
    : slots_(std::move(slots)), pairs_(std::move(pairs)) {
  std::vector<int> used(slots_.size(), 0);
  for (const auto& [a, b] : pairs_) {
    if (a < 0 || b < 0 || a >= rank() || b >= rank() || a == b) {
      throw PreconditionError("jet pair refers to an invalid slot");
    }
    const IndexSlot& sa = slots_[static_cast<std::size_t>(a)];
    const IndexSlot& sb = slots_[static_cast<std::size_t>(b)];
    const bool spatial_first = sa.kind == IndexKind::spatial && sb.kind == IndexKind::temporal;
    if (!spatial_first || sa.variance == sb.variance) {
      throw PreconditionError("jet pair must join a spatial slot with a temporal slot of opposite variance");
    }
    if (++used[static_cast<std::size_t>(a)] > 1 || ++used[static_cast<std::size_t>(b)] > 1) {
      throw PreconditionError("slot belongs to more than one jet pair");
    }
  }
}

std::vector<int> IndexSignature::extents(int m, int n) const {
  std::vector<int> ext;
  ext.reserve(slots_.size());
  for (const auto& s : slots_) ext.push_back(s.kind == IndexKind::temporal ? m : n);
  return ext;
}

void DTensorValue::validate(int m, int n) const {
  if (values.shape() != signature.extents(m, n)) {
    throw PreconditionError("d-tensor extents do not match its signature");
  }
}

}  // namespace jetkcc
