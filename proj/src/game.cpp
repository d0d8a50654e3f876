#include "trgame/game.hpp"

#include <cmath>

namespace trgame {

void GameConfig::validate() const {
  data.validate();
  if (n_train < 1 || n_test < 1) throw BadParams("GameConfig: n_train, n_test must be >= 1");
  budget.validate();
  trainer.cfg.validate();
  trainer.arch.validate();
  adaptor.cfg.validate();
}

double referee_valuation(const Model& f_star, const LabeledSet& v_prime) {
  if (v_prime.size() == 0) throw EmptySetError("referee_valuation: empty test set");
  return empirical_loss(f_star, v_prime, LossKind::ZeroOne);
}

std::unique_ptr<Adaptor> make_adaptor(const AdaptorSpec& spec, const Model& f,
                                      const LabeledSet& d, std::uint64_t pool_seed) {
  switch (spec.kind) {
    case AdaptorKind::Identity:
      return std::make_unique<IdentityAdaptor>();
    case AdaptorKind::RetrainMatching:
      return std::make_unique<RetrainMatchingAdaptor>(spec.cfg, spec.matcher, spec.schedule,
                                                      spec.alpha_max);
    case AdaptorKind::Atrm: {
      AtrmConfig acfg;
      acfg.alpha_max = spec.alpha_max;
      acfg.schedule = spec.schedule;
      acfg.matcher = spec.matcher;
      acfg.inner_budget = spec.inner_budget;
      return std::make_unique<AtrmAdaptor>(spec.cfg, acfg);
    }
    case AdaptorKind::Rmc: {
      // augmented pool: the clean training set plus adversarial copies
      // attacked against the pretrained model
      RmcConfig rcfg;
      rcfg.adapt_config = spec.cfg;
      RngStream pool_rng(pool_seed);
      const int copies = std::max(0, spec.rmc_adv_copies);
      LabeledSet pool = d;
      pool.features.conservativeResize(d.size() * (1 + copies), d.dim());
      for (int c = 0; c < copies; ++c) {
        LabeledSet adv = pgd_maximize({f}, CompositeLoss::Single, d, spec.inner_budget,
                                      pool_rng.child(static_cast<std::uint64_t>(c)).seed());
        pool.features.middleRows(d.size() * (c + 1), d.size()) = adv.features;
        pool.labels.insert(pool.labels.end(), adv.labels.begin(), adv.labels.end());
      }
      rcfg.augmented_pool = std::move(pool);
      rcfg.k_neighbors = std::min<int>(spec.rmc_k, static_cast<int>(rcfg.augmented_pool.size()));
      return std::make_unique<RmcAdaptor>(std::move(rcfg));
    }
  }
  throw BadParams("make_adaptor: unknown kind");
}

namespace {

Model train_pretrained(const GameConfig& cfg, const LabeledSet& d, RngStream defender) {
  TrainConfig tc = cfg.trainer.cfg;
  tc.seed = defender.child(rng_role::kInit).seed();
  if (cfg.trainer.kind == TrainerKind::Adversarial)
    return train_adversarial(d, tc, cfg.trainer.adv_budget, cfg.trainer.arch);
  return train_standard(d, tc, cfg.trainer.arch);
}

struct AttackOutcome {
  LabeledSet v_prime;
  double attacker_valuation = 0.0;
  AttackHistory history;
};

/// The attacker's move. The iterative attacks simulate Gamma with streams
/// derived from the attacker seed only.
AttackOutcome run_attacker(const GameConfig& cfg, const Adaptor& gamma, const Model& f,
                           const LabeledSet& d, const LabeledSet& v) {
  AttackOutcome out;
  RngStream attacker(cfg.attacker_seed);
  switch (cfg.attacker.kind) {
    case AttackerKind::Pgd:
    case AttackerKind::Transfer: {
      // one-shot PGD on the pretrained model; seeded like iteration 0 of the
      // iterative attacks so the reductions are bit-exact
      const std::uint64_t s = attacker.child(rng_role::kPgd).child(0).seed();
      out.v_prime = transfer_attack(f, v, cfg.budget, s);
      out.attacker_valuation = empirical_loss(f, out.v_prime, LossKind::ZeroOne);
      return out;
    }
    case AttackerKind::Fpa:
      out.history = fpa(gamma, d, v, f, cfg.attacker.iterations, cfg.budget, attacker.seed());
      break;
    case AttackerKind::GmsaAvg:
      out.history =
          gmsa(gamma, d, v, f, cfg.attacker.iterations, GmsaMode::Avg, cfg.budget, attacker.seed());
      break;
    case AttackerKind::GmsaMin:
      out.history =
          gmsa(gamma, d, v, f, cfg.attacker.iterations, GmsaMode::Min, cfg.budget, attacker.seed());
      break;
  }
  out.v_prime = out.history.best_attack_set();
  out.attacker_valuation = out.history.valuations[out.history.selected];
  return out;
}

GameTranscript play_game(const GameConfig& cfg, bool transductive) {
  cfg.validate();
  GameTranscript t;

  RngStream data_rng(cfg.data_seed);
  t.d = generate_synthetic(cfg.data, cfg.n_train, data_rng.child(rng_role::kData).child(0).seed());
  t.v = generate_synthetic(cfg.data, cfg.n_test,
                           data_rng.child(rng_role::kData).child(1).seed());

  RngStream defender(cfg.defender_seed);
  t.f = train_pretrained(cfg, t.d, defender);

  AdaptorSpec aspec = cfg.adaptor;
  if (!transductive) aspec.kind = AdaptorKind::Identity;
  // The RMC pool is public setup state (both players can reconstruct it), so
  // its stream comes from the data seed, not from defender-private randomness.
  auto gamma = make_adaptor(aspec, t.f, t.d, data_rng.child(rng_role::kPgd).seed());

  AttackOutcome attack = run_attacker(cfg, *gamma, t.f, t.d, t.v);
  t.v_prime = std::move(attack.v_prime);
  t.attacker_valuation = attack.attacker_valuation;
  t.history = std::move(attack.history);

  // Defender blindness: the adaptation receives feature vectors only. The
  // leak flag simulates a harness bug wiring labels through; refuse to play.
  if (cfg.leak_labels_to_adaptor)
    throw ProtocolViolation("adaptation step would receive labeled test data");
  const UnlabeledSet u_prime = project_features(t.v_prime);

  t.f_star = gamma->adapt(t.f, t.d, u_prime, defender.child(rng_role::kGamma).child(0));
  t.referee_valuation = referee_valuation(t.f_star, t.v_prime);

  // clean accuracy of the defense: adapt on the clean features and evaluate
  Model f_clean =
      gamma->adapt(t.f, t.d, project_features(t.v), defender.child(rng_role::kGamma).child(1));
  t.clean_accuracy = 1.0 - empirical_loss(f_clean, t.v, LossKind::ZeroOne);
  return t;
}

}  // namespace

GameTranscript play_transductive_game(const GameConfig& cfg) { return play_game(cfg, true); }

GameTranscript play_inductive_game(const GameConfig& cfg) { return play_game(cfg, false); }

SequenceGameResult play_sequence_game(const GameConfig& cfg, int length) {
  cfg.validate();
  if (length < 1 || length > 100) throw BadParams("play_sequence_game: length must be in [1,100]");

  RngStream data_rng(cfg.data_seed);
  LabeledSet d =
      generate_synthetic(cfg.data, cfg.n_train, data_rng.child(rng_role::kData).child(0).seed());
  LabeledSet seq =
      generate_synthetic(cfg.data, length, data_rng.child(rng_role::kData).child(1).seed());

  RngStream defender(cfg.defender_seed);
  Model f = train_pretrained(cfg, d, defender);
  auto gamma = make_adaptor(cfg.adaptor, f, d, data_rng.child(rng_role::kPgd).seed());

  RngStream attacker(cfg.attacker_seed);
  SequenceGameResult out;
  out.length = length;
  Model current = f;
  int errors = 0, clean_errors = 0;
  for (int p = 0; p < length; ++p) {
    LabeledSet point{seq.features.row(p), {seq.labels[p]}};
    // the attacker sees the model adapted to the first p points
    LabeledSet attacked =
        pgd_maximize({current}, CompositeLoss::Single, point, cfg.budget,
                     attacker.child(rng_role::kPgd).child(static_cast<std::uint64_t>(p)).seed());
    Model adapted =
        gamma->adapt(current, d, project_features(attacked),
                     defender.child(rng_role::kGamma).child(static_cast<std::uint64_t>(p)));
    const double loss = empirical_loss(adapted, attacked, LossKind::ZeroOne);
    out.per_point_loss.push_back(loss);
    errors += loss > 0.5 ? 1 : 0;
    clean_errors += forward(adapted, point.features.row(0).transpose()).label == point.labels[0]
                        ? 0
                        : 1;
    current = std::move(adapted);
  }
  out.robust_accuracy = 1.0 - static_cast<double>(errors) / length;
  out.clean_accuracy = 1.0 - static_cast<double>(clean_errors) / length;
  return out;
}

}  // namespace trgame
