#pragma once

#include <Eigen/Core>

#include "stpred/tensor.hpp"

namespace stp::detail {

// c = op(a) * op(b) (or +=) on row-major buffers; a is ar x ac, b is br x bc before transposition.
// Eigen's matrix-vector and small coefficient-based kernels choose their reduction order from buffer
// alignment, so those shapes use a fixed-order loop to keep results identical across runs.
template <typename T>
void gemm(const T* a, Index ar, Index ac, bool ta, const T* b, Index br, Index bc, bool tb, T* c, bool accumulate) {
  const Index m = ta ? ac : ar, k = ta ? ar : ac, n = tb ? br : bc;
  if (m == 1 || n == 1 || m + n + k < 24) {
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        T acc = 0;
        for (Index p = 0; p < k; ++p) acc += (ta ? a[p * ac + i] : a[i * ac + p]) * (tb ? b[j * bc + p] : b[p * bc + j]);
        c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
      }
    return;
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> am(a, ar, ac), bm(b, br, bc);
  Eigen::Map<Mat> cm(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) cm.noalias() += lhs * rhs;
    else cm.noalias() = lhs * rhs;
  };
  if (!ta && !tb) run(am, bm);
  else if (ta && !tb) run(am.transpose(), bm);
  else if (!ta && tb) run(am, bm.transpose());
  else run(am.transpose(), bm.transpose());
}

}  // namespace stp::detail
