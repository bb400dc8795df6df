#pragma once

#include <algorithm>
#include <cmath>

#include "cgbn/model.hpp"

namespace testing {

/// |a - b| <= tol * max(|a|, |b|), with a 1e-12 absolute allowance for weights near zero.
inline bool close_weight(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)) + 1e-12;
}

/// |a - b| <= tol * max(1, |a|, |b|), for means and variances.
inline bool close_value(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// D -> X with P(D=0) = p0, X | D=0 ~ N(m0, v0), X | D=1 ~ N(m1, v1).
inline cgbn::Network two_node(double p0, double m0, double v0, double m1, double v1) {
  using namespace cgbn;
  NodeSpec d{"D", NodeKind::discrete, {}, {"d0", "d1"}, {{p0, 1.0 - p0}}, {}};
  NodeSpec x{"X", NodeKind::continuous, {"D"}, {}, {}, {{m0, {}, v0}, {m1, {}, v1}}};
  return Network({d, x});
}

}  // namespace testing
