#ifndef HAQAE_GRAD_CHECK_HPP
#define HAQAE_GRAD_CHECK_HPP

// Central finite-difference check of reverse-mode gradients. The function is
// re-evaluated with each leaf element perturbed by +/-eps; stop_gradient
// outputs are frozen at the values seen on the analytic pass, matching the
// constant-treatment they receive during backward.

#include <algorithm>
#include <cmath>

#include "haqae/tensor.hpp"

namespace haqae {

// scalar_fn: () -> Tensor<Real>, rebuilding the graph from the given leaves
// on every call. Returns the max relative error over all leaf elements.
template <class Real, class Fn>
Real finite_diff_check(Fn scalar_fn, std::vector<Tensor<Real>> leaves, Real eps) {
  SgFreeze<Real> fz;
  fz.mode = SgFreeze<Real>::Mode::record;
  SgFreeze<Real>::active() = &fz;

  std::vector<std::vector<Real>> analytic;
  {
    for (auto& l : leaves) {
      l.set_requires_grad(true);
      l.zero_grad();
    }
    Tape<Real> tape;
    TapeScope<Real> scope(tape);
    Tensor<Real> loss = scalar_fn();
    if (loss.size() != 1) {
      SgFreeze<Real>::active() = nullptr;
      throw std::invalid_argument("finite_diff_check: function output is not scalar");
    }
    backward(tape, loss);
    for (auto& l : leaves) {
      if (l.grad().empty()) l.zero_grad();
      analytic.push_back(l.grad());
    }
  }

  fz.mode = SgFreeze<Real>::Mode::replay;
  Real max_rel = 0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const Real saved = vals[i];
      fz.cursor = 0;
      vals[i] = saved + eps;
      const Real up = scalar_fn().item();
      fz.cursor = 0;
      vals[i] = saved - eps;
      const Real dn = scalar_fn().item();
      vals[i] = saved;
      const Real numeric = (up - dn) / (Real(2) * eps);
      const Real a = analytic[li][i];
      const Real denom = std::max(Real(1e-8), std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  SgFreeze<Real>::active() = nullptr;
  return max_rel;
}

}  // namespace haqae

#endif  // HAQAE_GRAD_CHECK_HPP
