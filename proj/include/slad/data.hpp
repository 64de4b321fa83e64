#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slad/tensor.hpp"

namespace slad {

enum class DatasetKind { GaussianMixture, SwissRoll, Checkerboard };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianMixture;
  int dim = 2;
  int n_modes = 8;      // mixture components; also the label count for the mixture
  double radius = 4.0;  // circle radius of the mixture centers
  double scale = 0.5;   // per-component standard deviation (mixture) or noise level
  bool normalize = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct LabeledBatch {
  Tensor points;  // batch x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Deterministic synthetic dataset. Sample i is a pure function of (seed, i).
class Dataset {
 public:
  explicit Dataset(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  int num_labels() const;

  /// Multiplier applied to raw points so the global per-coordinate std is about 1.
  double normalization() const { return norm_; }

  /// Mixture component centers in normalized coordinates (mixture only).
  std::vector<std::vector<double>> mode_centers() const;
  /// Per-coordinate component std in normalized coordinates (mixture only).
  double mode_scale() const { return spec_.scale * norm_; }

  LabeledBatch sample(std::uint64_t first_index, std::size_t count) const;

 private:
  std::vector<double> raw_point(std::uint64_t index, int& label) const;

  DatasetSpec spec_;
  double norm_ = 1.0;
};

}  // namespace slad
