#pragma once

#include <cstdint>
#include <vector>

#include "trgame/core.hpp"
#include "trgame/learners.hpp"
#include "trgame/model.hpp"

namespace trgame {

enum class GmsaMode { Avg, Min };

/// How PGD combines the loss of a model list.
/// Single requires exactly one model. Avg averages per-model cross-entropy
/// (gradients accumulated in model order). Min follows, at every step, the
/// model currently attaining the minimum loss (smallest index on ties).
enum class CompositeLoss { Single, Avg, Min };

/// Sign-step PGD ascent of the composite cross-entropy, independently per
/// example. Per-example substreams are derived from (seed, example index),
/// so the result does not depend on worker count. Labels are never modified.
LabeledSet pgd_maximize(const std::vector<Model>& models, CompositeLoss composite,
                        const LabeledSet& v, const PerturbationBudget& budget,
                        std::uint64_t seed);

/// Composite cross-entropy of a model list on one example.
double composite_example_loss(const std::vector<Model>& models, CompositeLoss composite,
                              const Vec& x, int y);

/// State accumulated by the iterative attacks: models F^(0..T+1), attack
/// sets V^(0..T) (original labels retained) and the valuations
/// L_a(F^(i+1), V^(i)) under zero-one loss.
struct AttackHistory {
  std::vector<Model> models;
  std::vector<LabeledSet> attack_sets;
  std::vector<double> valuations;
  std::size_t selected = 0;

  const LabeledSet& best_attack_set() const { return attack_sets[selected]; }
};

/// Smallest index attaining the maximum valuation.
std::size_t select_best(const AttackHistory& history);

/// Fixed point attack: iteratively PGD-attack the single model produced by
/// the previous adaptation, then adapt on the result.
AttackHistory fpa(const Adaptor& gamma, const LabeledSet& d, const LabeledSet& v,
                  const Model& f0, int iterations, const PerturbationBudget& budget,
                  std::uint64_t seed);

/// Greedy model space attack: at iteration i, PGD-attack the whole model
/// history {F^(0..i)} under the Avg or Min composite loss. In Min mode the
/// PGD step count at iteration i is scaled by (i+1).
AttackHistory gmsa(const Adaptor& gamma, const LabeledSet& d, const LabeledSet& v,
                   const Model& f0, int iterations, GmsaMode mode,
                   const PerturbationBudget& budget, std::uint64_t seed);

/// Plain PGD against a fixed source model; the canonical transfer attack.
LabeledSet transfer_attack(const Model& f_source, const LabeledSet& v,
                           const PerturbationBudget& budget, std::uint64_t seed);

}  // namespace trgame
