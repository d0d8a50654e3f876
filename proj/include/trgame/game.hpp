#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "trgame/attacks.hpp"
#include "trgame/core.hpp"
#include "trgame/data.hpp"
#include "trgame/learners.hpp"
#include "trgame/model.hpp"

namespace trgame {

enum class TrainerKind { Standard, Adversarial };

struct TrainerSpec {
  TrainerKind kind = TrainerKind::Standard;
  TrainConfig cfg;
  ModelSpec arch;
  PerturbationBudget adv_budget;  // inner adversary for adversarial training
};

enum class AdaptorKind { Identity, RetrainMatching, Atrm, Rmc };

struct AdaptorSpec {
  AdaptorKind kind = AdaptorKind::Identity;
  TrainConfig cfg;
  Matcher matcher = Matcher::MeanFeature;
  AlphaSchedule schedule = AlphaSchedule::Progressive;
  double alpha_max = 0.1;
  PerturbationBudget inner_budget;  // ATRM inner maximization / RMC pool attack
  int rmc_k = 8;
  int rmc_adv_copies = 1;  // adversarial copies of D in the RMC pool
};

enum class AttackerKind { Pgd, Transfer, Fpa, GmsaAvg, GmsaMin };

struct AttackerSpec {
  AttackerKind kind = AttackerKind::Pgd;
  int iterations = 9;  // T for the iterative attacks
};

/// Full description of one game: data, the defender pair (T, Gamma), the
/// attacker, the agreed perturbation budget, and the three independent seed
/// roles.
struct GameConfig {
  DataSpec data;
  int n_train = 60;
  int n_test = 40;
  PerturbationBudget budget;
  TrainerSpec trainer;
  AdaptorSpec adaptor;
  AttackerSpec attacker;
  std::uint64_t data_seed = 1;
  std::uint64_t attacker_seed = 2;
  std::uint64_t defender_seed = 3;
  // Test hook: pretend the harness wired labeled test data into the
  // adaptation call. The game must detect this and abort.
  bool leak_labels_to_adaptor = false;

  void validate() const;
};

struct GameTranscript {
  LabeledSet d, v, v_prime;
  Model f;       // pretrained
  Model f_star;  // adapted (equals f in the inductive game)
  double attacker_valuation = 0.0;  // what the attacker measured with its own simulation
  double referee_valuation = 0.0;   // zero-one loss of f_star on v'
  double clean_accuracy = 0.0;
  AttackHistory history;  // empty for the one-shot attackers
};

/// Zero-one loss of the adapted model on the attacked test set.
double referee_valuation(const Model& f_star, const LabeledSet& v_prime);

/// Build the adaptation algorithm described by the spec. RMC needs the
/// pretrained model and training data to assemble its augmented pool, seeded
/// from the defender stream.
std::unique_ptr<Adaptor> make_adaptor(const AdaptorSpec& spec, const Model& f,
                                      const LabeledSet& d, std::uint64_t pool_seed);

/// Definition of the transductive game: sample D and V, train F (defender
/// seed), let the attacker produce V' simulating Gamma with its own seed,
/// adapt F* = Gamma(F, D, V'|_X) with the defender seed, and value F* on V'.
GameTranscript play_transductive_game(const GameConfig& cfg);

/// Classic fixed-model game: same pipeline with the adaptation forced to the
/// identity, so F* = F and the attacker faces a single model.
GameTranscript play_inductive_game(const GameConfig& cfg);

/// Sequence protocol for per-point adaptors (|U| = 1): point p+1 is attacked
/// against the model already adapted to points 1..p, and the adapted model is
/// carried forward.
struct SequenceGameResult {
  int length = 0;
  double robust_accuracy = 0.0;
  double clean_accuracy = 0.0;
  std::vector<double> per_point_loss;
};

SequenceGameResult play_sequence_game(const GameConfig& cfg, int length);

}  // namespace trgame
