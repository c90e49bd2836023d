#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "formlink/error.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink::tc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter name plus the shared step counter.
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of a single tensor. Moments are zero-filled
/// on first use; `step` is the 1-based count after this update.
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t step,
                        const AdamConfig& cfg) {
  if (grad.shape() != param.shape())
    throw ContractError("adam_step: gradient shape " + shape_str(grad.shape()) + " does not match parameter shape " +
                        shape_str(param.shape()));
  if (m.empty()) m = Tensor(param.shape());
  if (v.empty()) v = Tensor(param.shape());
  if (m.shape() != param.shape() || v.shape() != param.shape())
    throw ContractError("adam_step: moment shape does not match parameter shape " + shape_str(param.shape()));
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

/// Applies one Adam step to every parameter in the store using its accumulated grad.
inline void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  for (auto& [name, p] : params) {
    if (p.grad.empty()) p.zero_grad();
    adam_update(p.value, p.grad, state.m[name], state.v[name], state.step, cfg);
  }
}

}  // namespace formlink::tc
