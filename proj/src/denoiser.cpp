#include "slad/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace slad {

void DenoiserConfig::validate() const {
  if (dim < 1 || dim > 64) throw std::invalid_argument("denoiser dim must be in [1, 64]");
  if (width < 1) throw std::invalid_argument("denoiser width must be positive");
  if (hidden_layers < 0) throw std::invalid_argument("hidden_layers must be >= 0");
  if (num_labels < 1) throw std::invalid_argument("num_labels must be >= 1");
  if (label_dim < 1 || t_freqs < 1 || gamma_freqs < 1) throw std::invalid_argument("embedding sizes must be positive");
  if (!(freq_min > 0.0 && freq_min <= freq_max)) throw std::invalid_argument("need 0 < freq_min <= freq_max");
  if (!(sigma_data > 0.0)) throw std::invalid_argument("sigma_data must be positive");
  if (!(data_std > 0.0)) throw std::invalid_argument("data_std must be positive");
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& [_, t] : tensors_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

void ema_update(const ParamStore& theta, ParamStore& theta_minus, double mu) {
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("EMA decay must lie in [0, 1)");
  if (theta.tensors().size() != theta_minus.tensors().size()) {
    throw std::invalid_argument("EMA shadow does not match parameter set");
  }
  for (const auto& [name, value] : theta.tensors()) {
    Tensor& shadow = theta_minus.at(name);
    require_same_shape(value, shadow, "ema_update");
    for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = mu * shadow[i] + (1.0 - mu) * value[i];
  }
}

std::vector<double> frequency_bank(int n, double lo, double hi) {
  if (n < 1) throw std::invalid_argument("frequency bank needs at least one entry");
  std::vector<double> bank(static_cast<std::size_t>(n));
  if (n == 1) {
    bank[0] = lo;
    return bank;
  }
  const double ratio = std::log(hi / lo);
  for (int i = 0; i < n; ++i) bank[i] = lo * std::exp(ratio * static_cast<double>(i) / static_cast<double>(n - 1));
  return bank;
}

Tensor fourier_embed(double value, std::span<const double> bank) {
  const std::size_t n = bank.size();
  Tensor out({1, 2 * n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::sin(value * bank[i]);
    out[n + i] = std::cos(value * bank[i]);
  }
  return out;
}

Conditioning Conditioning::uniform(std::size_t rows, int label, double gamma, int t) {
  return {std::vector<int>(rows, label), std::vector<double>(rows, gamma), std::vector<int>(rows, t)};
}

double c_skip(int t, int T, double sigma_data) {
  const double s = static_cast<double>(t) / static_cast<double>(T);
  const double sd2 = sigma_data * sigma_data;
  return sd2 / (s * s + sd2);
}

double c_out(int t, int T, double sigma_data) {
  const double s = static_cast<double>(t) / static_cast<double>(T);
  return s / std::sqrt(s * s + sigma_data * sigma_data);
}

// ---------------------------------------------------------------------------

namespace {

std::string layer(const char* base, int i) { return std::string(base) + std::to_string(i); }

Tensor broadcast_rows(std::span<const double> coef, std::size_t cols) {
  Tensor out({coef.size(), cols}, 0.0);
  for (std::size_t r = 0; r < coef.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = coef[r];
  }
  return out;
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config)
    : config_(config),
      t_bank_(frequency_bank(config.t_freqs, config.freq_min, config.freq_max)),
      gamma_bank_(frequency_bank(config.gamma_freqs, config.freq_min, config.freq_max)) {
  config_.validate();
}

ParamStore Denoiser::init(Rng& rng) const {
  const auto w = static_cast<std::size_t>(config_.width);
  const auto in_main = static_cast<std::size_t>(config_.dim + 2 * config_.t_freqs + config_.label_dim);
  const auto in_gamma = static_cast<std::size_t>(2 * config_.gamma_freqs);

  auto gaussian = [&rng](std::size_t rows, std::size_t cols, double stddev) {
    Tensor t({rows, cols}, 0.0);
    for (auto& v : t.values()) v = stddev * rng.normal();
    return t;
  };
  // Fan-in of the first layer counts the gamma block as well since both blocks
  // feed the same pre-activation.
  const double in_std = 1.0 / std::sqrt(static_cast<double>(in_main + in_gamma));

  ParamStore p;
  p.set("in.weight", gaussian(in_main, w, in_std));
  p.set("in_gamma.weight", gaussian(in_gamma, w, in_std));
  p.set("in.bias", Tensor({1, w}, 0.0));
  p.set("label.table", gaussian(static_cast<std::size_t>(config_.num_labels + 1), config_.label_dim, 1.0));
  for (int i = 0; i < config_.hidden_layers; ++i) {
    p.set(layer("hidden", i) + ".weight", gaussian(w, w, 1.0 / std::sqrt(static_cast<double>(w))));
    p.set(layer("hidden", i) + ".bias", Tensor({1, w}, 0.0));
  }
  p.set("out.weight", gaussian(w, config_.dim, 1.0 / std::sqrt(static_cast<double>(w))));
  p.set("out.bias", Tensor({1, static_cast<std::size_t>(config_.dim)}, 0.0));
  return p;
}

std::vector<std::string> Denoiser::gamma_parameter_names() const { return {"in_gamma.weight"}; }

void Denoiser::check_cond(const Tensor& x, const Conditioning& cond, int T) const {
  if (x.shape().size() != 2 || x.cols() != static_cast<std::size_t>(config_.dim)) {
    throw ShapeError("denoiser expects rows of width " + std::to_string(config_.dim) + ", got " + shape_str(x.shape()));
  }
  const std::size_t n = x.rows();
  if (cond.labels.size() != n || cond.gamma.size() != n || cond.t.size() != n) {
    throw ShapeError("conditioning must carry one (label, gamma, t) per row");
  }
  for (std::size_t r = 0; r < n; ++r) {
    const int c = cond.labels[r];
    if (c != kNullLabel && (c < 0 || c >= config_.num_labels)) {
      throw std::out_of_range("label " + std::to_string(c) + " outside [0, " + std::to_string(config_.num_labels) + ")");
    }
    if (!(cond.gamma[r] >= 0.0 && cond.gamma[r] <= 1.0)) throw std::domain_error("gamma must lie in [0, 1]");
    if (cond.t[r] < 0 || cond.t[r] > T) throw std::out_of_range("timestep outside [0, T]");
  }
}

Tensor Denoiser::gamma_embedding(const Conditioning& cond) const {
  const std::size_t n = cond.size();
  const std::size_t g = gamma_bank_.size();
  Tensor out({n, 2 * g}, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (cond.gamma[r] == 1.0) continue;
    // The (1 - gamma) taper makes the embedding vanish continuously at gamma = 1,
    // so what is learned just below 1 carries over to the zero-embedding point.
    const Tensor e = fourier_embed(cond.gamma[r], gamma_bank_);
    const double taper = 1.0 - cond.gamma[r];
    for (std::size_t j = 0; j < 2 * g; ++j) out[r * 2 * g + j] = taper * e[j];
  }
  return out;
}

Var Denoiser::eps(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
                  const NoiseSchedule& sched, const PathSpec& path, bool excise_gamma) const {
  const int T = sched.steps();
  check_cond(x.value(), cond, T);
  auto param = [&](const std::string& name) {
    return tape.parameter(binding.prefix + "/" + name, params.at(name), binding.trainable);
  };

  const std::size_t n = cond.size();
  const std::size_t tf = t_bank_.size();
  Tensor t_emb({n, 2 * tf}, 0.0);
  const auto L = static_cast<std::size_t>(config_.num_labels);
  Tensor one_hot({n, L + 1}, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const Tensor e = fourier_embed(static_cast<double>(cond.t[r]) / static_cast<double>(T), t_bank_);
    for (std::size_t j = 0; j < 2 * tf; ++j) t_emb[r * 2 * tf + j] = e[j];
    const int c = cond.labels[r];
    one_hot[r * (L + 1) + (c == kNullLabel ? L : static_cast<std::size_t>(c))] = 1.0;
  }

  const std::size_t d = x.value().cols();
  std::vector<double> in_scale(n, 1.0), base(n, 0.0), out_scale(n, 1.0);
  if (config_.precondition) {
    const auto [sigma, alpha] = row_levels(cond, sched, path);
    const double d2 = config_.data_std * config_.data_std;
    for (std::size_t r = 0; r < n; ++r) {
      const double var = alpha[r] * alpha[r] * d2 + sigma[r] * sigma[r];
      in_scale[r] = 1.0 / std::sqrt(var);
      base[r] = sigma[r] / var;
      out_scale[r] = alpha[r] * config_.data_std / std::sqrt(var);
    }
  }

  Var label_emb = tape.matmul(tape.constant(std::move(one_hot)), param("label.table"));
  Var x_in = config_.precondition ? tape.constant(broadcast_rows(in_scale, d)) * x : x;
  const Var parts[] = {x_in, tape.constant(std::move(t_emb)), label_emb};
  Var h = tape.affine(tape.concat(parts), param("in.weight"), param("in.bias"));
  if (!excise_gamma) h = h + tape.matmul(tape.constant(gamma_embedding(cond)), param("in_gamma.weight"));
  h = tape.silu(h);
  for (int i = 0; i < config_.hidden_layers; ++i) {
    h = tape.silu(tape.affine(h, param(layer("hidden", i) + ".weight"), param(layer("hidden", i) + ".bias")));
  }
  Var out = tape.affine(h, param("out.weight"), param("out.bias"));
  if (!config_.precondition) return out;
  return tape.constant(broadcast_rows(base, d)) * x + tape.constant(broadcast_rows(out_scale, d)) * out;
}

std::pair<std::vector<double>, std::vector<double>> Denoiser::row_levels(const Conditioning& cond,
                                                                         const NoiseSchedule& sched,
                                                                         const PathSpec& path) const {
  const std::size_t n = cond.size();
  std::vector<double> sigma(n), alpha(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int t = cond.t[r];
    const double g = cond.gamma[r];
    if (t == 0 || g == 1.0) {
      sigma[r] = sched.sigma(t);
      alpha[r] = sched.alpha(t);
    } else if (path.mode == PathMode::DL) {
      const DlSchedule d = dl_schedule(g, t, path.k, sched);
      sigma[r] = d.sigma;
      alpha[r] = d.alpha;
    } else {
      sigma[r] = path.exact_sigma ? sigma_gamma_exact(g, t, path.k, sched) : sigma_gamma_empirical(g, t, path.k, sched);
      alpha[r] = sched.alpha(t);
    }
  }
  return {std::move(sigma), std::move(alpha)};
}

Var Denoiser::denoise(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
                      const NoiseSchedule& sched, const PathSpec& path) const {
  Var e = eps(tape, params, binding, x, cond, sched, path);
  const auto [sigma, alpha] = row_levels(cond, sched, path);
  return x - tape.constant(broadcast_rows(sigma, x.value().cols())) * e;
}

Var Denoiser::f_theta(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
                      const NoiseSchedule& sched, const PathSpec& path) const {
  Var d = denoise(tape, params, binding, x, cond, sched, path);
  const auto [sigma, alpha] = row_levels(cond, sched, path);
  std::vector<double> inv(alpha.size());
  for (std::size_t r = 0; r < alpha.size(); ++r) inv[r] = 1.0 / alpha[r];
  return tape.constant(broadcast_rows(inv, x.value().cols())) * d;
}

Var Denoiser::generate(Tape& tape, const ParamStore& params, const Binding& binding, Var x, const Conditioning& cond,
                       const NoiseSchedule& sched, const PathSpec& path) const {
  Var e = eps(tape, params, binding, x, cond, sched, path);
  const auto [sigma, alpha] = row_levels(cond, sched, path);
  const int T = sched.steps();
  const std::size_t n = cond.size();
  // F = (c_skip + c_out / alpha) x - (c_out sigma / alpha) eps
  std::vector<double> on_x(n), on_eps(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (cond.t[r] == 0) {
      on_x[r] = 1.0;
      on_eps[r] = 0.0;
      continue;
    }
    if (alpha[r] == 0.0) throw std::domain_error("signal level is zero; generator undefined");
    const double cs = c_skip(cond.t[r], T, config_.sigma_data);
    const double co = c_out(cond.t[r], T, config_.sigma_data);
    on_x[r] = cs + co / alpha[r];
    on_eps[r] = co * sigma[r] / alpha[r];
  }
  const std::size_t d = x.value().cols();
  return tape.constant(broadcast_rows(on_x, d)) * x - tape.constant(broadcast_rows(on_eps, d)) * e;
}

Tensor Denoiser::eps_value(const ParamStore& params, const Tensor& x, const Conditioning& cond,
                           const NoiseSchedule& sched, const PathSpec& path) const {
  Tape tape;
  Var xv = tape.constant(x);
  return eps(tape, params, Binding{"eval", false}, xv, cond, sched, path).value();
}

Tensor Denoiser::generate_value(const ParamStore& params, const Tensor& x, const Conditioning& cond,
                                const NoiseSchedule& sched, const PathSpec& path) const {
  Tape tape;
  Var xv = tape.constant(x);
  return generate(tape, params, Binding{"eval", false}, xv, cond, sched, path).value();
}

}  // namespace slad
