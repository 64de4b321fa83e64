#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "slad/noise_schedule.hpp"
#include "slad/rng.hpp"
#include "slad/subpath.hpp"
#include "slad/tensor.hpp"

namespace slad {

/// Label value meaning "no conditioning" (the classifier-free branch).
inline constexpr int kNullLabel = -1;

/// Version tag for how gamma/t/label embeddings enter the network. Stored in
/// checkpoints; bump whenever the input layout changes.
inline constexpr int kEmbeddingVersion = 1;

struct DenoiserConfig {
  int dim = 2;
  int width = 128;
  int hidden_layers = 3;
  int num_labels = 8;
  int label_dim = 16;
  int t_freqs = 16;
  int gamma_freqs = 8;
  double freq_min = 1.0;
  double freq_max = 1000.0;
  double sigma_data = 0.5;
  /// Scale the MLP's contribution to eps by alpha d / sqrt(alpha^2 d^2 + sigma^2)
  /// around the Gaussian-data estimate sigma x / (alpha^2 d^2 + sigma^2), with
  /// d = data_std. The raw MLP output is used as eps when false.
  bool precondition = true;
  double data_std = 1.0;

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Named parameter arrays in deterministic (sorted) order.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::map<std::string, Tensor> tensors) : tensors_(std::move(tensors)) {}

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const ParamStore&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// theta_minus <- mu * theta_minus + (1 - mu) * theta, element-wise.
void ema_update(const ParamStore& theta, ParamStore& theta_minus, double mu);

/// Log-spaced frequency bank with n entries between lo and hi (inclusive).
std::vector<double> frequency_bank(int n, double lo, double hi);

/// [sin(value * f_i)..., cos(value * f_i)...], length 2 * bank.size().
Tensor fourier_embed(double value, std::span<const double> bank);

/// Per-row conditioning: class label, sub-path coordinate gamma and integer time.
struct Conditioning {
  std::vector<int> labels;
  std::vector<double> gamma;
  std::vector<int> t;

  std::size_t size() const { return t.size(); }
  static Conditioning uniform(std::size_t rows, int label, double gamma, int t);
};

/// How a parameter set is placed on a tape: names get `prefix/`, and
/// non-trainable sets are recorded as leaves that never receive gradient.
struct Binding {
  std::string prefix;
  bool trainable = true;
};

/// How the noise level of a (possibly interior) sub-path point is computed.
struct PathSpec {
  int k = 1;
  PathMode mode = PathMode::SL;
  bool exact_sigma = false;
};

/// Consistency-model boundary coefficients on normalized time t/T.
double c_skip(int t, int T, double sigma_data);
double c_out(int t, int T, double sigma_data);

/// MLP noise predictor eps(x, c, gamma, t) and the derived generator F.
class Denoiser {
 public:
  explicit Denoiser(DenoiserConfig config);

  const DenoiserConfig& config() const { return config_; }

  /// Fresh parameters, N(0, 1/fan_in) weights and zero biases.
  ParamStore init(Rng& rng) const;

  /// Names of the parameters that only see the gamma embedding.
  std::vector<std::string> gamma_parameter_names() const;

  /// Rows x (2 * gamma_freqs): (1 - gamma) * fourier_embed(gamma); rows with
  /// gamma == 1 are exactly zero.
  Tensor gamma_embedding(const Conditioning& cond) const;

  /// Noise prediction at the path point described by (cond, path).
  Var eps(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
          const NoiseSchedule& sched, const PathSpec& path = {}, bool excise_gamma = false) const;

  /// D = x - sigma(gamma, t) * eps.
  Var denoise(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
              const NoiseSchedule& sched, const PathSpec& path) const;

  /// f = D / alpha, with (alpha_DL, sigma_DL) in DL mode.
  Var f_theta(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
              const NoiseSchedule& sched, const PathSpec& path) const;

  /// F = c_skip(t) x + c_out(t) f. Rows with t == 0 return x exactly.
  Var generate(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
               const NoiseSchedule& sched, const PathSpec& path) const;

  /// Tape-free conveniences (gradient-free evaluation).
  Tensor eps_value(const ParamStore& params, const Tensor& x, const Conditioning& cond, const NoiseSchedule& sched,
                   const PathSpec& path = {}) const;
  Tensor generate_value(const ParamStore& params, const Tensor& x, const Conditioning& cond,
                        const NoiseSchedule& sched, const PathSpec& path = {}) const;

 private:
  void check_cond(const Tensor& x, const Conditioning& cond, int T) const;
  /// Per-row (noise level, signal level) for the path point.
  std::pair<std::vector<double>, std::vector<double>> row_levels(const Conditioning& cond, const NoiseSchedule& sched,
                                                                const PathSpec& path) const;

  DenoiserConfig config_;
  std::vector<double> t_bank_;
  std::vector<double> gamma_bank_;
};

}  // namespace slad
