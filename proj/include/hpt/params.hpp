#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hpt/model.hpp"

namespace hpt {

inline void check_compatible(const ParamList& a, const ParamList& b, const char* what) {
  if (a.size() != b.size()) {
    throw ContractError(detail::concat(what, ": parameter lists differ in length (", a.size(), " vs ", b.size(), ")"));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) {
      throw ContractError(detail::concat(what, ": tensor ", i, " has shape ", shape_str(a[i].shape()), " vs ",
                                         shape_str(b[i].shape())));
    }
  }
}

/// weight * a + (1 - weight) * b, elementwise. The endpoints return an exact copy.
inline ParamList blend(const ParamList& a, const ParamList& b, double weight) {
  check_compatible(a, b, "blend");
  if (weight == 1.0) return a;
  if (weight == 0.0) return b;
  ParamList out = a;
  for (std::size_t t = 0; t < out.size(); ++t) {
    auto& dst = out[t].values();
    const auto& src = b[t].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = weight * dst[i] + (1.0 - weight) * src[i];
  }
  return out;
}

/// ||a - b||_2 / ||b||_2 over the concatenation of all tensors.
inline double relative_distance(const ParamList& a, const ParamList& b) {
  check_compatible(a, b, "relative_distance");
  double diff = 0.0, ref = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      const double d = a[t][i] - b[t][i];
      diff += d * d;
      ref += b[t][i] * b[t][i];
    }
  }
  if (ref == 0.0) throw ContractError("relative_distance: reference parameters are all zero");
  return std::sqrt(diff) / std::sqrt(ref);
}

inline std::size_t scalar_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& t : params) n += t.size();
  return n;
}

inline bool all_finite(const ParamList& params) {
  for (const auto& t : params)
    if (!t.all_finite()) return false;
  return true;
}

}  // namespace hpt
