#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "eic/error.hpp"

namespace eic {

/// Ways to combine the old-sentence state o and new-sentence state n into one vector u.
///
///   diff          u = n - o
///   diffABS       u = |n - o|
///   n-diffABS     u = n ⊕ |n - o|
///   n-o           u = n ⊕ o
///   n-diffABS-o   u = n ⊕ |n - o| ⊕ o
enum class TransformKind { diff, diff_abs, n_diff_abs, n_o, n_diff_abs_o };

inline constexpr TransformKind kAllTransforms[] = {TransformKind::diff, TransformKind::diff_abs,
                                                   TransformKind::n_diff_abs, TransformKind::n_o,
                                                   TransformKind::n_diff_abs_o};

constexpr Eigen::Index output_blocks(TransformKind kind) {
  switch (kind) {
    case TransformKind::diff:
    case TransformKind::diff_abs: return 1;
    case TransformKind::n_diff_abs:
    case TransformKind::n_o: return 2;
    case TransformKind::n_diff_abs_o: return 3;
  }
  return 0;
}

constexpr std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::diff: return "diff";
    case TransformKind::diff_abs: return "diffABS";
    case TransformKind::n_diff_abs: return "n-diffABS";
    case TransformKind::n_o: return "n-o";
    case TransformKind::n_diff_abs_o: return "n-diffABS-o";
  }
  return "?";
}

/// Accepts the canonical names and their underscore spellings ("n_diffABS_o").
inline std::optional<TransformKind> parse_transform(std::string_view s) {
  for (auto k : kAllTransforms) {
    const auto name = to_string(k);
    if (s.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < s.size() && same; ++i) {
      same = s[i] == name[i] || (s[i] == '_' && name[i] == '-');
    }
    if (same) return k;
  }
  return std::nullopt;
}

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename DerivedO, typename DerivedN>
Vec<typename DerivedO::Scalar> transform(TransformKind kind, const Eigen::MatrixBase<DerivedO>& o,
                                         const Eigen::MatrixBase<DerivedN>& n) {
  using Scalar = typename DerivedO::Scalar;
  if (o.size() != n.size()) {
    throw Error(ErrorKind::internal, "transform: o has " + std::to_string(o.size()) +
                                         " entries but n has " + std::to_string(n.size()));
  }
  const auto d = o.size();
  Vec<Scalar> u(d * output_blocks(kind));
  switch (kind) {
    case TransformKind::diff: u = n - o; break;
    case TransformKind::diff_abs: u = (n - o).cwiseAbs(); break;
    case TransformKind::n_diff_abs: u << n, (n - o).cwiseAbs(); break;
    case TransformKind::n_o: u << n, o; break;
    case TransformKind::n_diff_abs_o: u << n, (n - o).cwiseAbs(), o; break;
  }
  return u;
}

/// Chain rule through transform(): returns (dL/do, dL/dn) given dL/du.
/// The subgradient of |x| at 0 is taken as 0.
template <typename DerivedO, typename DerivedN, typename DerivedU>
std::pair<Vec<typename DerivedO::Scalar>, Vec<typename DerivedO::Scalar>> transform_backward(
    TransformKind kind, const Eigen::MatrixBase<DerivedO>& o, const Eigen::MatrixBase<DerivedN>& n,
    const Eigen::MatrixBase<DerivedU>& grad_u) {
  using Scalar = typename DerivedO::Scalar;
  const auto d = o.size();
  const Vec<Scalar> sign = (n - o).unaryExpr([](Scalar x) { return Scalar((x > 0) - (x < 0)); });
  Vec<Scalar> go = Vec<Scalar>::Zero(d);
  Vec<Scalar> gn = Vec<Scalar>::Zero(d);
  auto abs_block = [&](Eigen::Index b) {
    const Vec<Scalar> g = sign.cwiseProduct(grad_u.segment(b * d, d));
    gn += g;
    go -= g;
  };
  switch (kind) {
    case TransformKind::diff:
      gn = grad_u;
      go = -grad_u;
      break;
    case TransformKind::diff_abs: abs_block(0); break;
    case TransformKind::n_diff_abs:
      gn = grad_u.head(d);
      abs_block(1);
      break;
    case TransformKind::n_o:
      gn = grad_u.head(d);
      go = grad_u.segment(d, d);
      break;
    case TransformKind::n_diff_abs_o:
      gn = grad_u.head(d);
      go = grad_u.segment(2 * d, d);
      abs_block(1);
      break;
  }
  return {go, gn};
}

}  // namespace eic
