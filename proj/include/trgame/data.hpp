#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "trgame/core.hpp"

namespace trgame {

enum class SyntheticKind { TwoGaussians, Blobs2D, Rings };

/// Dataset source: a synthetic generator, or a pair of IDX files.
struct DataSpec {
  SyntheticKind kind = SyntheticKind::Blobs2D;

  // blobs2d: two isotropic Gaussian blobs
  Vec center0 = (Vec(2) << 0.0, 0.0).finished();
  Vec center1 = (Vec(2) << 1.0, 1.0).finished();
  double noise = 0.15;

  // two_gaussians: delegates to the Gaussian-instance sampler
  int dim = 16;
  double sigma = 1.0;
  std::uint64_t mu_seed = 0;

  // rings: two concentric circles with radial noise
  double radius0 = 0.5;
  double radius1 = 1.0;

  // file-backed datasets (take precedence when set)
  std::optional<std::string> idx_images;
  std::optional<std::string> idx_labels;

  void validate() const;
};

/// Deterministic labeled dataset of n points.
LabeledSet generate_synthetic(const DataSpec& spec, int n, std::uint64_t seed);

}  // namespace trgame
