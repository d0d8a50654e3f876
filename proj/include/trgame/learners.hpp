#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "trgame/core.hpp"
#include "trgame/model.hpp"
#include "trgame/rng.hpp"

namespace trgame {

enum class Optimizer { Sgd, Adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.1;
  Optimizer optimizer = Optimizer::Sgd;
  AdamParams adam{};
  std::uint64_t seed = 0;
  std::optional<int> early_stop_patience;
  double weight_decay = 0.0;

  void validate() const;
};

enum class Matcher { MeanFeature, Discriminator };
enum class AlphaSchedule { Constant, Progressive };

struct AtrmConfig {
  double alpha_max = 0.1;
  AlphaSchedule schedule = AlphaSchedule::Progressive;
  PerturbationBudget inner_budget;
  Matcher matcher = Matcher::MeanFeature;
};

struct RmcConfig {
  int k_neighbors = 1;
  LabeledSet augmented_pool;  // clean + adversarial points
  TrainConfig adapt_config;
};

/// Progressive ramp 2/(1+exp(-10 p)) - 1 scaled by alpha_max;
/// p is training progress in [0, 1].
double matching_weight(AlphaSchedule schedule, double alpha_max, double progress);

/// Seeded mini-batch cross-entropy training from scratch.
/// Deterministic given (D, cfg, arch).
Model train_standard(const LabeledSet& d, const TrainConfig& cfg, const ModelSpec& arch);

/// Adversarial training: every mini-batch is replaced by PGD-perturbed
/// examples against the current model before the gradient step.
Model train_adversarial(const LabeledSet& d, const TrainConfig& cfg,
                        const PerturbationBudget& budget, const ModelSpec& arch);

/// The do-nothing adaptation: returns f unchanged.
Model adapt_identity(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime);

inline TrainConfig default_discriminator_config() {
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 32;
  c.learning_rate = 0.5;
  return c;
}

/// Distance between the phi-feature distributions of A and B under f.
/// MeanFeature: squared L2 distance of the mean feature vectors.
/// Discriminator: ln 2 minus the final loss of a logistic discriminator
/// trained to tell phi(A) from phi(B), clamped at >= 0.
double feature_distance(const Model& f, const UnlabeledSet& a, const UnlabeledSet& b,
                        Matcher matcher,
                        const TrainConfig& disc_cfg = default_discriminator_config());

/// Retrain from fresh init on labeled d plus a feature-matching penalty that
/// aligns phi(d) with phi(u_prime); the penalty weight follows the schedule.
Model adapt_retrain_matching(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                             const TrainConfig& cfg, Matcher matcher, AlphaSchedule schedule,
                             double alpha_max);

/// Adversarial training warm-started from f with the matching penalty; the
/// adversarial set is regenerated against the current model every epoch.
Model adapt_atrm(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                 const TrainConfig& cfg, const AtrmConfig& acfg);

/// Fine-tune f on the k nearest pool points to x_hat (Euclidean distance in
/// phi-space of f, ties by pool index). Early-stops on a 10% held-out slice
/// of the neighbor set.
Model adapt_rmc(const Model& f, const RmcConfig& rcfg, const Vec& x_hat);

/// Indices of the k nearest pool rows to x_hat in phi-space (ascending
/// distance, ties by index). Exposed for oracle tests.
std::vector<Eigen::Index> rmc_neighbors(const Model& f, const LabeledSet& pool, const Vec& x_hat,
                                        int k);

/// Defender-side adaptation Gamma(F, D, U'). Implementations must be pure
/// functions of their inputs and the provided stream.
class Adaptor {
 public:
  virtual ~Adaptor() = default;
  virtual Model adapt(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                      RngStream rng) const = 0;
  virtual std::string name() const = 0;
};

class IdentityAdaptor final : public Adaptor {
 public:
  Model adapt(const Model& f, const LabeledSet&, const UnlabeledSet&, RngStream) const override {
    return f;
  }
  std::string name() const override { return "identity"; }
};

class RetrainMatchingAdaptor final : public Adaptor {
 public:
  RetrainMatchingAdaptor(TrainConfig cfg, Matcher matcher, AlphaSchedule schedule,
                         double alpha_max)
      : cfg_(cfg), matcher_(matcher), schedule_(schedule), alpha_max_(alpha_max) {}
  Model adapt(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
              RngStream rng) const override;
  std::string name() const override { return "retrain_matching"; }

 private:
  TrainConfig cfg_;
  Matcher matcher_;
  AlphaSchedule schedule_;
  double alpha_max_;
};

class AtrmAdaptor final : public Adaptor {
 public:
  AtrmAdaptor(TrainConfig cfg, AtrmConfig acfg) : cfg_(cfg), acfg_(acfg) {}
  Model adapt(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
              RngStream rng) const override;
  std::string name() const override { return "atrm"; }

 private:
  TrainConfig cfg_;
  AtrmConfig acfg_;
};

/// Single-point adaptation; rejects |U'| != 1.
class RmcAdaptor final : public Adaptor {
 public:
  explicit RmcAdaptor(RmcConfig rcfg) : rcfg_(std::move(rcfg)) {}
  Model adapt(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
              RngStream rng) const override;
  std::string name() const override { return "rmc"; }

 private:
  RmcConfig rcfg_;
};

}  // namespace trgame
