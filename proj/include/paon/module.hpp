#pragma once

#include "paon/autograd.hpp"
#include "paon/instrument.hpp"

namespace paon {

/// Per-forward-pass state shared by every layer of a model.
template <typename T>
struct ForwardContext {
  Tape<T>& tape;
  bool training = false;
  SingularityLog* singularity = nullptr;
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace paon
