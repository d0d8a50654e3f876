#include "trgame/core.hpp"

#include <algorithm>
#include <cmath>

#include "trgame/model.hpp"

namespace trgame {

namespace {
constexpr double kMembershipSlack = 1e-9;
}

void LabeledSet::validate(bool unit_box) const {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DimMismatch("LabeledSet: feature rows != label count");
  if (!features.allFinite()) throw NumericError("LabeledSet: non-finite feature");
  for (int y : labels)
    if (y < 0) throw BadParams("LabeledSet: negative class index");
  if (unit_box && features.size() > 0) {
    if (features.minCoeff() < 0.0 || features.maxCoeff() > 1.0)
      throw BadParams("LabeledSet: feature outside [0,1]");
  }
}

void UnlabeledSet::validate() const {
  if (!features.allFinite()) throw NumericError("UnlabeledSet: non-finite feature");
}

void PerturbationBudget::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0)
    throw BadParams("budget: epsilon must be finite and >= 0");
  if (!std::isfinite(step_size) || step_size <= 0.0)
    throw BadParams("budget: step_size must be finite and > 0");
  if (steps < 1) throw BadParams("budget: steps must be >= 1");
}

UnlabeledSet project_features(const LabeledSet& v) { return UnlabeledSet(v.features); }

double empirical_loss(const Model& f, const LabeledSet& v, LossKind kind) {
  if (v.size() == 0) throw EmptySetError("empirical_loss: empty set");
  if (v.dim() != f.input_dim()) throw DimMismatch("empirical_loss: feature dim != model input");
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    total += example_loss(f, v.features.row(i).transpose(), v.labels[i], kind);
  return total / static_cast<double>(v.size());
}

Vec project_to_ball(const Vec& x_ref, const Vec& x, const PerturbationBudget& budget) {
  if (x_ref.size() != x.size()) throw DimMismatch("project_to_ball: dim mismatch");
  Vec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double v = std::clamp(x[j], x_ref[j] - budget.epsilon, x_ref[j] + budget.epsilon);
    if (budget.clip_unit_box) v = std::clamp(v, 0.0, 1.0);
    out[j] = v;
  }
  return out;
}

bool in_neighborhood(const Vec& x_ref, const Vec& x, const PerturbationBudget& budget) {
  if (x_ref.size() != x.size()) throw DimMismatch("in_neighborhood: dim mismatch");
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (std::abs(x[j] - x_ref[j]) > budget.epsilon + kMembershipSlack) return false;
    if (budget.clip_unit_box &&
        (x[j] < -kMembershipSlack || x[j] > 1.0 + kMembershipSlack))
      return false;
  }
  return true;
}

bool in_neighborhood(const LabeledSet& clean, const LabeledSet& perturbed,
                     const PerturbationBudget& budget) {
  if (clean.size() != perturbed.size() || clean.dim() != perturbed.dim()) return false;
  if (clean.labels != perturbed.labels) return false;
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    if (!in_neighborhood(clean.features.row(i).transpose(),
                         perturbed.features.row(i).transpose(), budget))
      return false;
  }
  return true;
}

}  // namespace trgame
