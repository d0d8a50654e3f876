#include "trgame/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "trgame/parallel.hpp"

namespace trgame {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Input gradient of the composite loss at (x, y). Models are visited in
/// index order; Min re-evaluates the argmin model at every call.
Vec composite_input_grad(const std::vector<Model>& models, CompositeLoss composite, const Vec& x,
                         int y) {
  if (composite == CompositeLoss::Single || models.size() == 1) {
    return *loss_gradients(models.front(), x, y, LossKind::CrossEntropy, true, false).input_grad;
  }
  if (composite == CompositeLoss::Avg) {
    Vec acc = Vec::Zero(x.size());
    for (const Model& m : models)
      acc += *loss_gradients(m, x, y, LossKind::CrossEntropy, true, false).input_grad;
    return acc / static_cast<double>(models.size());
  }
  // Min: follow the model with the smallest current loss, ties to the
  // smallest index
  std::size_t best = 0;
  double best_loss = example_loss(models[0], x, y, LossKind::CrossEntropy);
  for (std::size_t j = 1; j < models.size(); ++j) {
    const double lj = example_loss(models[j], x, y, LossKind::CrossEntropy);
    if (lj < best_loss) {
      best_loss = lj;
      best = j;
    }
  }
  return *loss_gradients(models[best], x, y, LossKind::CrossEntropy, true, false).input_grad;
}

}  // namespace

double composite_example_loss(const std::vector<Model>& models, CompositeLoss composite,
                              const Vec& x, int y) {
  if (models.empty()) throw EmptyModelList("composite_example_loss: no models");
  if (composite == CompositeLoss::Single || models.size() == 1)
    return example_loss(models.front(), x, y, LossKind::CrossEntropy);
  if (composite == CompositeLoss::Avg) {
    double acc = 0.0;
    for (const Model& m : models) acc += example_loss(m, x, y, LossKind::CrossEntropy);
    return acc / static_cast<double>(models.size());
  }
  double best = example_loss(models[0], x, y, LossKind::CrossEntropy);
  for (std::size_t j = 1; j < models.size(); ++j)
    best = std::min(best, example_loss(models[j], x, y, LossKind::CrossEntropy));
  return best;
}

LabeledSet pgd_maximize(const std::vector<Model>& models, CompositeLoss composite,
                        const LabeledSet& v, const PerturbationBudget& budget,
                        std::uint64_t seed) {
  if (models.empty()) throw EmptyModelList("pgd_maximize: no models");
  if (composite == CompositeLoss::Single && models.size() != 1)
    throw BadParams("pgd_maximize: Single requires exactly one model");
  budget.validate();
  v.validate();
  for (const Model& m : models)
    if (m.input_dim() != v.dim()) throw DimMismatch("pgd_maximize: model/data dim mismatch");

  LabeledSet out;
  out.labels = v.labels;  // labels are never modified
  out.features.resize(v.size(), v.dim());

  RngStream example_root = RngStream(seed).child(rng_role::kExample);
  par::for_each_index(v.size(), [&](std::ptrdiff_t i) {
    RngStream rng = example_root.child(static_cast<std::uint64_t>(i));
    const Vec x_ref = v.features.row(i).transpose();
    const int y = v.labels[i];
    Vec x = x_ref;
    if (budget.random_init && budget.epsilon > 0.0) {
      for (Eigen::Index j = 0; j < x.size(); ++j)
        x[j] += rng.uniform(-budget.epsilon, budget.epsilon);
      x = project_to_ball(x_ref, x, budget);
    }
    for (int s = 0; s < budget.steps; ++s) {
      Vec g = composite_input_grad(models, composite, x, y);
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += budget.step_size * sign0(g[j]);
      x = project_to_ball(x_ref, x, budget);
    }
    out.features.row(i) = x.transpose();
  });
  return out;
}

std::size_t select_best(const AttackHistory& history) {
  if (history.valuations.empty()) throw EmptyHistory("select_best: no valuations");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.valuations.size(); ++i)
    if (history.valuations[i] > history.valuations[best]) best = i;
  return best;
}

namespace {

/// Shared FPA/GMSA loop. attack_models(i) yields the model list PGD attacks
/// at iteration i; steps_scale(i) scales the step count.
template <class AttackModels, class StepsScale>
AttackHistory iterate_attack(const Adaptor& gamma, const LabeledSet& d, const LabeledSet& v,
                             const Model& f0, int iterations, const PerturbationBudget& budget,
                             std::uint64_t seed, CompositeLoss composite,
                             AttackModels&& attack_models, StepsScale&& steps_scale) {
  if (iterations < 0) throw BadParams("attack: iterations must be >= 0");
  RngStream root(seed);
  RngStream pgd_root = root.child(rng_role::kPgd);
  RngStream gamma_root = root.child(rng_role::kGamma);

  AttackHistory h;
  h.models.push_back(f0);
  for (int i = 0; i <= iterations; ++i) {
    PerturbationBudget b = budget;
    b.steps *= steps_scale(i);
    LabeledSet vi = pgd_maximize(attack_models(h, i), composite, v, b,
                                 pgd_root.child(static_cast<std::uint64_t>(i)).seed());
    Model next = gamma.adapt(f0, d, project_features(vi),
                             gamma_root.child(static_cast<std::uint64_t>(i)));
    h.valuations.push_back(empirical_loss(next, vi, LossKind::ZeroOne));
    h.attack_sets.push_back(std::move(vi));
    h.models.push_back(std::move(next));
  }
  h.selected = select_best(h);
  return h;
}

}  // namespace

AttackHistory fpa(const Adaptor& gamma, const LabeledSet& d, const LabeledSet& v, const Model& f0,
                  int iterations, const PerturbationBudget& budget, std::uint64_t seed) {
  return iterate_attack(
      gamma, d, v, f0, iterations, budget, seed, CompositeLoss::Single,
      [](const AttackHistory& h, int i) { return std::vector<Model>{h.models[i]}; },
      [](int) { return 1; });
}

AttackHistory gmsa(const Adaptor& gamma, const LabeledSet& d, const LabeledSet& v, const Model& f0,
                   int iterations, GmsaMode mode, const PerturbationBudget& budget,
                   std::uint64_t seed) {
  const CompositeLoss composite =
      mode == GmsaMode::Avg ? CompositeLoss::Avg : CompositeLoss::Min;
  return iterate_attack(
      gamma, d, v, f0, iterations, budget, seed, composite,
      [](const AttackHistory& h, int i) {
        return std::vector<Model>(h.models.begin(), h.models.begin() + i + 1);
      },
      [mode](int i) { return mode == GmsaMode::Min ? i + 1 : 1; });
}

LabeledSet transfer_attack(const Model& f_source, const LabeledSet& v,
                           const PerturbationBudget& budget, std::uint64_t seed) {
  return pgd_maximize({f_source}, CompositeLoss::Single, v, budget, seed);
}

}  // namespace trgame
