#pragma once

#include <map>
#include <string>

#include "slad/denoiser.hpp"
#include "slad/tensor.hpp"

namespace slad {

// Reference optimization settings of the large-scale distillation runs. The
// desk-scale defaults below use a larger learning rate for a small MLP.
inline constexpr double kReferenceLearningRate = 8e-6;
inline constexpr double kReferenceWeightDecay = 0.0;
inline constexpr double kReferenceClipNorm = 10.0;
inline constexpr double kReferenceEmaDecay = 0.95;
inline constexpr int kReferenceSolverSkip = 20;

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = kReferenceWeightDecay;
  double clip_norm = kReferenceClipNorm;  // <= 0 disables clipping
};

/// L2 norm over all gradient entries.
double global_norm(const GradMap& grads);

/// Rescales every gradient by min(1, max_norm / norm). Returns the pre-clip norm.
double clip_by_global_norm(GradMap& grads, double max_norm);

/// AdamW with decoupled weight decay and global-norm clipping.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }

  /// Applies one update. `grads` is keyed by parameter name (no tape prefix)
  /// and must cover every parameter. Returns the pre-clip gradient norm.
  double step(ParamStore& params, GradMap grads);

  const std::map<std::string, Tensor>& first_moment() const { return m_; }
  const std::map<std::string, Tensor>& second_moment() const { return v_; }

  /// Reinstates saved moments and step count (resuming from a checkpoint).
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v, long steps);

 private:
  AdamWConfig config_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  long t_ = 0;
};

/// Strips `prefix/` from tape parameter names, dropping other prefixes.
GradMap grads_for(const GradMap& tape_grads, const std::string& prefix);

}  // namespace slad
