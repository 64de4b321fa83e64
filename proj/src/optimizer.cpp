#include "slad/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace slad {

double global_norm(const GradMap& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.values()) s += v * v;
  }
  return std::sqrt(s);
}

double clip_by_global_norm(GradMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (auto& v : g.values()) v *= scale;
    }
  }
  return norm;
}

double AdamW::step(ParamStore& params, GradMap grads) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NonFiniteError("non-finite gradient for '" + name + "'");
  }
  const double norm = clip_by_global_norm(grads, config_.clip_norm);
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, _] : params.tensors()) {
    if (grads.find(name) == grads.end()) throw std::invalid_argument("missing gradient for '" + name + "'");
  }
  for (auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    require_same_shape(p, g, "adamw");
    auto [mit, m_new] = m_.try_emplace(name, Tensor(p.shape(), 0.0));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(p.shape(), 0.0));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * p[i]);
    }
  }
  return norm;
}

void AdamW::restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v, long steps) {
  if (steps < 0) throw std::invalid_argument("optimizer step count must be >= 0");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

GradMap grads_for(const GradMap& tape_grads, const std::string& prefix) {
  GradMap out;
  const std::string head = prefix + "/";
  for (const auto& [name, g] : tape_grads) {
    if (name.rfind(head, 0) == 0) out.emplace(name.substr(head.size()), g);
  }
  return out;
}

}  // namespace slad
