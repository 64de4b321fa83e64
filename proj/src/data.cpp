#include "slad/data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "slad/rng.hpp"

namespace slad {

namespace {

constexpr int kCheckerboardSquares = 8;
constexpr std::uint64_t kNormalizationProbe = 20000;

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::GaussianMixture:
      return "gaussian_mixture";
    case DatasetKind::SwissRoll:
      return "swiss_roll";
    case DatasetKind::Checkerboard:
      return "checkerboard";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (name == "swiss_roll") return DatasetKind::SwissRoll;
  if (name == "checkerboard") return DatasetKind::Checkerboard;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

void DatasetSpec::validate() const {
  if (dim < 2 || dim > 16) throw std::invalid_argument("dataset dim must be in [2, 16]");
  if (n_modes < 1) throw std::invalid_argument("dataset needs at least one mode");
  if (radius < 0.0 || scale < 0.0) throw std::invalid_argument("radius and scale must be non-negative");
}

Dataset::Dataset(DatasetSpec spec) : spec_(spec) {
  spec_.validate();
  if (!spec_.normalize) return;
  double var = 0.0;
  if (spec_.kind == DatasetKind::GaussianMixture) {
    // Per-coordinate variance of the centers plus the component variance,
    // averaged over coordinates.
    const auto centers = mode_centers();
    for (int d = 0; d < spec_.dim; ++d) {
      double mean = 0.0, sq = 0.0;
      for (const auto& c : centers) {
        mean += c[d];
        sq += c[d] * c[d];
      }
      mean /= static_cast<double>(centers.size());
      var += sq / static_cast<double>(centers.size()) - mean * mean + spec_.scale * spec_.scale;
    }
    var /= static_cast<double>(spec_.dim);
  } else {
    std::vector<double> sum(spec_.dim, 0.0), sq(spec_.dim, 0.0);
    int label = 0;
    for (std::uint64_t i = 0; i < kNormalizationProbe; ++i) {
      const auto p = raw_point(i, label);
      for (int d = 0; d < spec_.dim; ++d) {
        sum[d] += p[d];
        sq[d] += p[d] * p[d];
      }
    }
    const double n = static_cast<double>(kNormalizationProbe);
    for (int d = 0; d < spec_.dim; ++d) var += sq[d] / n - (sum[d] / n) * (sum[d] / n);
    var /= static_cast<double>(spec_.dim);
  }
  norm_ = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
}

int Dataset::num_labels() const {
  return spec_.kind == DatasetKind::Checkerboard ? kCheckerboardSquares : spec_.n_modes;
}

std::vector<std::vector<double>> Dataset::mode_centers() const {
  if (spec_.kind != DatasetKind::GaussianMixture) throw std::logic_error("mode centers exist only for mixtures");
  std::vector<std::vector<double>> centers;
  const double scale = norm_;
  for (int m = 0; m < spec_.n_modes; ++m) {
    std::vector<double> c(spec_.dim, 0.0);
    const double angle = 2.0 * std::numbers::pi * m / spec_.n_modes;
    c[0] = spec_.radius * std::cos(angle) * scale;
    c[1] = spec_.radius * std::sin(angle) * scale;
    centers.push_back(std::move(c));
  }
  return centers;
}

std::vector<double> Dataset::raw_point(std::uint64_t index, int& label) const {
  Rng rng = Rng(spec_.seed).split(index);
  std::vector<double> p(spec_.dim, 0.0);
  switch (spec_.kind) {
    case DatasetKind::GaussianMixture: {
      label = rng.uniform_int(0, spec_.n_modes - 1);
      const double angle = 2.0 * std::numbers::pi * label / spec_.n_modes;
      p[0] = spec_.radius * std::cos(angle);
      p[1] = spec_.radius * std::sin(angle);
      for (auto& v : p) v += spec_.scale * rng.normal();
      break;
    }
    case DatasetKind::SwissRoll: {
      const double u = rng.uniform();
      label = std::min(static_cast<int>(u * spec_.n_modes), spec_.n_modes - 1);
      const double theta = 1.5 * std::numbers::pi * (1.0 + 2.0 * u);
      p[0] = theta * std::cos(theta);
      p[1] = theta * std::sin(theta);
      for (auto& v : p) v += spec_.scale * rng.normal();
      break;
    }
    case DatasetKind::Checkerboard: {
      label = rng.uniform_int(0, kCheckerboardSquares - 1);
      // Squares (i, j) on a 4 x 4 board over [-2, 2]^2 with i + j even.
      const int row = label / 2;
      const int col = 2 * (label % 2) + (row % 2);
      p[0] = -2.0 + col + rng.uniform();
      p[1] = -2.0 + row + rng.uniform();
      for (std::size_t d = 2; d < p.size(); ++d) p[d] = spec_.scale * rng.normal();
      break;
    }
  }
  return p;
}

LabeledBatch Dataset::sample(std::uint64_t first_index, std::size_t count) const {
  if (count == 0) throw std::invalid_argument("sample count must be positive");
  LabeledBatch batch{Tensor({count, static_cast<std::size_t>(spec_.dim)}, 0.0), std::vector<int>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const auto p = raw_point(first_index + i, batch.labels[i]);
    for (int d = 0; d < spec_.dim; ++d) batch.points.at(i, d) = p[d] * norm_;
  }
  return batch;
}

}  // namespace slad
