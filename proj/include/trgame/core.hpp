#pragma once

#include <Eigen/Dense>
#include <vector>

#include "trgame/common.hpp"

namespace trgame {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Model;  // model.hpp

enum class LossKind { ZeroOne, CrossEntropy };

/// Labeled examples: one feature row per example, class indices in {0..C-1}.
struct LabeledSet {
  Mat features;             // n x dim
  std::vector<int> labels;  // size n

  LabeledSet() = default;
  LabeledSet(Mat f, std::vector<int> l) : features(std::move(f)), labels(std::move(l)) {}

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws unless rows match labels and all values are finite. When
  /// unit_box is set every feature must lie in [0, 1].
  void validate(bool unit_box = false) const;
};

struct UnlabeledSet {
  Mat features;  // n x dim

  UnlabeledSet() = default;
  explicit UnlabeledSet(Mat f) : features(std::move(f)) {}

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const;
};

/// L-infinity attack budget. The neighborhood is the closed ball
/// |x' - x|_inf <= epsilon, optionally intersected with the unit box.
struct PerturbationBudget {
  double epsilon = 0.0;
  double step_size = 0.01;
  int steps = 1;
  bool random_init = false;
  bool clip_unit_box = false;

  void validate() const;
};

/// Drop labels, keep feature rows in order.
UnlabeledSet project_features(const LabeledSet& v);

/// Mean per-example loss of f on v. ZeroOne equals 1 - accuracy.
double empirical_loss(const Model& f, const LabeledSet& v, LossKind kind);

/// Coordinatewise clamp of x into [x_ref - eps, x_ref + eps], then into
/// [0, 1] when the budget asks for it. Idempotent.
Vec project_to_ball(const Vec& x_ref, const Vec& x, const PerturbationBudget& budget);

/// Closed-ball membership with 1e-9 absolute slack for round-off.
bool in_neighborhood(const Vec& x_ref, const Vec& x, const PerturbationBudget& budget);

/// Row-wise neighborhood check for whole sets (labels must match too).
bool in_neighborhood(const LabeledSet& clean, const LabeledSet& perturbed,
                     const PerturbationBudget& budget);

}  // namespace trgame
