#include "paon/instrument.hpp"

#include <algorithm>

namespace paon {

LayerOps& LayerOps::operator+=(const LayerOps& o) {
  multiplications += o.multiplications;
  divisions += o.divisions;
  aux_tensor_ops += o.aux_tensor_ops;
  shifter_mults += o.shifter_mults;
  shifter_interp_ops += o.shifter_interp_ops;
  return *this;
}

LayerOps OpCountReport::totals() const {
  LayerOps t;
  t.layer = "total";
  for (const auto& l : layers) t += l;
  return t;
}

void SingularityLog::record(const std::string& layer, std::uint64_t events) {
  auto it = std::find(layers_.begin(), layers_.end(), layer);
  if (it == layers_.end()) {
    layers_.push_back(layer);
    counts_.push_back(events);
  } else {
    counts_[static_cast<std::size_t>(it - layers_.begin())] += events;
  }
}

void SingularityLog::reset_counts() { std::fill(counts_.begin(), counts_.end(), 0); }

std::uint64_t SingularityLog::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

}  // namespace paon
