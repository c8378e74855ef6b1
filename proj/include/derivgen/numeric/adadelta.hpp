#pragma once

#include <span>
#include <vector>

#include "derivgen/numeric/tensor.hpp"

namespace derivgen::numeric {

struct AdadeltaState {
  std::vector<double> accum_grad_sq;
  std::vector<double> accum_update_sq;
};

/// Adadelta (Zeiler 2012) over a fixed, ordered list of parameters.
class Adadelta {
 public:
  explicit Adadelta(double rho = 0.95, double eps = 1e-6);

  /// Applies one update to every parameter from its gradient, then clears
  /// the gradients. The parameter list must be the same on every call.
  void step(std::span<Tensor* const> params);

  double rho() const { return rho_; }
  double eps() const { return eps_; }
  const std::vector<AdadeltaState>& states() const { return states_; }

 private:
  double rho_;
  double eps_;
  std::vector<AdadeltaState> states_;
};

/// Global L2 norm of all gradients.
double grad_norm(std::span<Tensor* const> params);
/// Rescales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

}  // namespace derivgen::numeric
