#include "trgame/rejectron.hpp"

#include <algorithm>
#include <cmath>

#include "trgame/attacks.hpp"
#include "trgame/data.hpp"
#include "trgame/parallel.hpp"
#include "trgame/rng.hpp"

namespace trgame {

AcceptanceSet make_acceptance_set(const Vec& scores, double threshold) {
  AcceptanceSet s;
  s.scores = scores;
  s.threshold = threshold;
  s.mask.resize(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.size(); ++i) s.mask[i] = scores[i] <= threshold;
  return s;
}

Model train_discriminator(const UnlabeledSet& d_train, const UnlabeledSet& x_tilde,
                          const TrainConfig& cfg, const ModelSpec& arch) {
  if (d_train.size() == 0 || x_tilde.size() == 0)
    throw EmptySetError("train_discriminator: empty input");
  if (d_train.dim() != x_tilde.dim()) throw DimMismatch("train_discriminator: dim mismatch");
  Mat x(d_train.size() + x_tilde.size(), d_train.dim());
  x.topRows(d_train.size()) = d_train.features;
  x.bottomRows(x_tilde.size()) = x_tilde.features;
  std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
  std::fill(y.begin() + d_train.size(), y.end(), 1);
  return train_standard(LabeledSet{std::move(x), std::move(y)}, cfg, arch);
}

double discriminator_score(const Model& h, const Vec& x) { return class_probability(h, x, 1); }

Vec discriminator_scores(const Model& h, const Mat& x) {
  Vec s(x.rows());
  par::for_each_index(x.rows(),
                      [&](std::ptrdiff_t i) { s[i] = class_probability(h, x.row(i).transpose(), 1); });
  return s;
}

PairValuation pair_valuation(const Model& f, const Model& h, double threshold,
                             const LabeledSet& u_clean, const LabeledSet& u_prime) {
  if (u_clean.size() == 0 || u_prime.size() == 0) throw EmptySetError("pair_valuation: empty set");
  PairValuation out;

  // rej: exact rejected fraction of the clean set
  Vec clean_scores = discriminator_scores(h, u_clean.features);
  Eigen::Index rejected = 0;
  for (Eigen::Index i = 0; i < clean_scores.size(); ++i)
    if (!(clean_scores[i] <= threshold)) ++rejected;
  out.rej = static_cast<double>(rejected) / static_cast<double>(u_clean.size());

  // err: misclassified fraction of the accepted evaluation points
  Vec eval_scores = discriminator_scores(h, u_prime.features);
  Eigen::Index accepted = 0, wrong = 0;
  for (Eigen::Index i = 0; i < u_prime.size(); ++i) {
    if (!(eval_scores[i] <= threshold)) continue;
    ++accepted;
    if (forward(f, u_prime.features.row(i).transpose()).label != u_prime.labels[i]) ++wrong;
  }
  out.accepted = static_cast<int>(accepted);
  if (accepted > 0) out.err = static_cast<double>(wrong) / static_cast<double>(accepted);
  return out;
}

std::vector<SweepPoint> sweep_thresholds(const Model& f, const Model& h,
                                         const LabeledSet& u_clean, const LabeledSet& u_prime,
                                         const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw BadParams("sweep_thresholds: no thresholds");
  std::vector<SweepPoint> out;
  out.reserve(thresholds.size());
  for (double tau : thresholds) {
    PairValuation pv = pair_valuation(f, h, tau, u_clean, u_prime);
    out.push_back({tau, pv.rej, pv.err});
  }
  return out;
}

LabeledSet mimic_attack(const Model& f, const Model& h, const LabeledSet& v,
                        const PerturbationBudget& budget, double lambda, std::uint64_t seed) {
  budget.validate();
  v.validate();
  LabeledSet out;
  out.labels = v.labels;
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
      Vec g = *loss_gradients(f, x, y, LossKind::CrossEntropy, true, false).input_grad;
      g -= lambda * class_probability_input_grad(h, x, 1);
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double sg = g[j] > 0.0 ? 1.0 : (g[j] < 0.0 ? -1.0 : 0.0);
        x[j] += budget.step_size * sg;
      }
      x = project_to_ball(x_ref, x, budget);
    }
    out.features.row(i) = x.transpose();
  });
  return out;
}

namespace {

std::vector<double> unit_thresholds(int count) {
  std::vector<double> taus(count);
  for (int i = 0; i < count; ++i) taus[i] = static_cast<double>(i) / (count - 1);
  return taus;
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  LabeledSet out;
  out.features.resize(a.size() + b.size(), a.dim());
  out.features.topRows(a.size()) = a.features;
  out.features.bottomRows(b.size()) = b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

}  // namespace

ScenarioResult run_failure_mode_experiment(const ScenarioConfig& cfg) {
  RngStream root(cfg.seed);
  DataSpec blobs;
  blobs.kind = SyntheticKind::Blobs2D;
  blobs.noise = cfg.blob_noise;

  LabeledSet d_train =
      generate_synthetic(blobs, cfg.n_train, root.child(rng_role::kData).child(0).seed());
  LabeledSet z_clean =
      generate_synthetic(blobs, cfg.n_eval, root.child(rng_role::kData).child(1).seed());
  LabeledSet attack_base =
      generate_synthetic(blobs, cfg.n_eval, root.child(rng_role::kData).child(2).seed());

  ModelSpec clf_arch{{2, 8, 2}, 1};
  TrainConfig clf_cfg = cfg.classifier_cfg;
  clf_cfg.seed = root.child(rng_role::kInit).child(0).seed();
  Model f = train_standard(d_train, clf_cfg, clf_arch);

  ModelSpec disc_arch{{2, 8, 2}, 1};
  const std::vector<double> taus = unit_thresholds(cfg.thresholds);
  ScenarioResult result;

  // z is the "normal" half of x_tilde: rejection is measured on it, the
  // error on whatever the discriminator lets through
  auto evaluate = [&](const LabeledSet& z, const LabeledSet& adv_half, std::uint64_t disc_tag) {
    LabeledSet x_tilde = concat(z, adv_half);
    TrainConfig disc_cfg = cfg.discriminator_cfg;
    disc_cfg.seed = root.child(rng_role::kInit).child(disc_tag).seed();
    Model h = train_discriminator(project_features(d_train), project_features(x_tilde), disc_cfg,
                                  disc_arch);
    return sweep_thresholds(f, h, z, x_tilde, taus);
  };

  // (a) clean normals + plain PGD adversarials: detectable, a good threshold exists
  LabeledSet adv_pgd = pgd_maximize({f}, CompositeLoss::Single, attack_base, cfg.budget,
                                    root.child(rng_role::kPgd).child(0).seed());
  result.pgd_curve = evaluate(z_clean, adv_pgd, 1);

  // (b) benign-corrupted normals (constant feature shift, still classified
  // fine) + the same PGD adversarials: the corrupted normals get rejected
  LabeledSet z_benign = z_clean;
  z_benign.features.array() += cfg.benign_shift;
  result.benign_curve = evaluate(z_benign, adv_pgd, 2);

  // (c) clean normals + mimics that fool the classifier while scoring low on
  // a surrogate discriminator trained against the plain-PGD mix
  LabeledSet x_tilde_pgd = concat(z_clean, adv_pgd);
  TrainConfig surr_cfg = cfg.discriminator_cfg;
  surr_cfg.seed = root.child(rng_role::kInit).child(3).seed();
  Model h_surrogate = train_discriminator(project_features(d_train),
                                          project_features(x_tilde_pgd), surr_cfg, disc_arch);
  LabeledSet adv_mimic = mimic_attack(f, h_surrogate, attack_base, cfg.budget, cfg.mimic_lambda,
                                      root.child(rng_role::kPgd).child(1).seed());
  result.mimic_curve = evaluate(z_clean, adv_mimic, 4);
  return result;
}

}  // namespace trgame
