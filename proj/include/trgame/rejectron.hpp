#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trgame/core.hpp"
#include "trgame/learners.hpp"
#include "trgame/model.hpp"

namespace trgame {

/// Discriminator scores over an evaluated set with the induced acceptance
/// mask (accepted = score <= threshold).
struct AcceptanceSet {
  Vec scores;
  double threshold = 0.0;
  std::vector<bool> mask;
};

AcceptanceSet make_acceptance_set(const Vec& scores, double threshold);

/// The (err, rej) pair: rej is the exact rejected fraction of the clean set;
/// err is the misclassified fraction of the accepted adversarial-evaluation
/// points, undefined (not zero) when nothing is accepted.
struct PairValuation {
  std::optional<double> err;
  double rej = 0.0;
  int accepted = 0;
};

/// Binary model trained with label 0 on d_train and label 1 on x_tilde;
/// score(x) is the probability of class 1.
Model train_discriminator(const UnlabeledSet& d_train, const UnlabeledSet& x_tilde,
                          const TrainConfig& cfg, const ModelSpec& arch);

double discriminator_score(const Model& h, const Vec& x);
Vec discriminator_scores(const Model& h, const Mat& x);

PairValuation pair_valuation(const Model& f, const Model& h, double threshold,
                             const LabeledSet& u_clean, const LabeledSet& u_prime);

struct SweepPoint {
  double threshold = 0.0;
  double rej = 0.0;
  std::optional<double> err;
};

/// pair_valuation at every threshold; rej is non-increasing because the
/// acceptance sets nest.
std::vector<SweepPoint> sweep_thresholds(const Model& f, const Model& h,
                                         const LabeledSet& u_clean, const LabeledSet& u_prime,
                                         const std::vector<double>& thresholds);

/// Joint PGD that raises the classifier loss while driving the discriminator
/// score down: ascends ce(f; x, y) - lambda * score_h(x) within the budget.
LabeledSet mimic_attack(const Model& f, const Model& h, const LabeledSet& v,
                        const PerturbationBudget& budget, double lambda, std::uint64_t seed);

/// Desk-scale failure-mode scenarios on 2-D blobs. In each scenario x_tilde
/// is half clean, half perturbed; the discriminator is trained on the clean
/// training features against x_tilde and the (rej, err) curve is swept.
struct ScenarioConfig {
  int n_train = 400;
  int n_eval = 200;  // per half of x_tilde
  double blob_noise = 0.1;
  PerturbationBudget budget;    // attack budget for the adversarial halves
  double benign_shift = 0.1;    // constant feature shift for the corruption case
  double mimic_lambda = 1.0;
  int thresholds = 101;
  TrainConfig classifier_cfg;
  TrainConfig discriminator_cfg;
  std::uint64_t seed = 0;
};

struct ScenarioResult {
  std::vector<SweepPoint> pgd_curve;     // plain PGD adversarial half
  std::vector<SweepPoint> benign_curve;  // benign corruption half
  std::vector<SweepPoint> mimic_curve;   // discriminator-aware adversarial half
};

ScenarioResult run_failure_mode_experiment(const ScenarioConfig& cfg);

}  // namespace trgame
