#include "derivgen/numeric/adadelta.hpp"

#include <cmath>
#include <stdexcept>

namespace derivgen::numeric {

Adadelta::Adadelta(double rho, double eps) : rho_(rho), eps_(eps) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("adadelta rho must lie in (0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adadelta eps must be positive");
}

void Adadelta::step(std::span<Tensor* const> params) {
  if (states_.empty()) {
    for (Tensor* p : params) states_.push_back({std::vector<double>(p->size(), 0.0),
                                                std::vector<double>(p->size(), 0.0)});
  }
  if (states_.size() != params.size()) {
    throw std::invalid_argument("adadelta: parameter list changed between steps");
  }
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto& st = states_[k];
    if (st.accum_grad_sq.size() != p.size()) {
      throw std::invalid_argument("adadelta: parameter " + std::to_string(k) + " changed size");
    }
    p.enable_grad();
    auto values = p.values();
    auto grad = p.grad();
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      double& eg2 = st.accum_grad_sq[i];
      double& ed2 = st.accum_update_sq[i];
      eg2 = rho_ * eg2 + (1.0 - rho_) * g * g;
      const double delta = -std::sqrt(ed2 + eps_) / std::sqrt(eg2 + eps_) * g;
      ed2 = rho_ * ed2 + (1.0 - rho_) * delta * delta;
      values[i] += delta;
    }
    p.zero_grad();
  }
}

double grad_norm(std::span<Tensor* const> params) {
  double sq = 0.0;
  for (const Tensor* p : params) {
    for (double g : p->grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor* p : params) {
      for (double& g : p->grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace derivgen::numeric
