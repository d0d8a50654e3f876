#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "trgame/attacks.hpp"
#include "trgame/data.hpp"
#include "trgame/learners.hpp"

using namespace trgame;

namespace {

DataSpec blob_spec(double noise = 0.12) {
  DataSpec d;
  d.kind = SyntheticKind::Blobs2D;
  d.noise = noise;
  return d;
}

TrainConfig quick_cfg(std::uint64_t seed, int epochs = 120) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.learning_rate = 0.2;
  c.seed = seed;
  return c;
}

const ModelSpec kMlpArch{{2, 8, 2}, 1};
const ModelSpec kLinearArch{{2, 2}, 0};

}  // namespace

TEST_CASE("train_standard drives a separable blob to zero training error") {
  LabeledSet d = generate_synthetic(blob_spec(0.08), 40, 17);
  REQUIRE(oracle::linearly_separable_2d(d));  // margin verified independently
  TrainConfig cfg = quick_cfg(3, 200);
  Model f = train_standard(d, cfg, kMlpArch);
  CHECK(empirical_loss(f, d, LossKind::ZeroOne) == 0.0);
}

TEST_CASE("train_standard memorizes a single example") {
  Mat x(1, 2);
  x << 0.3, 0.4;
  LabeledSet d{x, {1}};
  Model f = train_standard(d, quick_cfg(5), kMlpArch);
  CHECK(forward(f, x.row(0).transpose()).label == 1);
}

TEST_CASE("training is bit-deterministic given the seed") {
  LabeledSet d = generate_synthetic(blob_spec(), 50, 23);
  Model a = train_standard(d, quick_cfg(9), kMlpArch);
  Model b = train_standard(d, quick_cfg(9), kMlpArch);
  CHECK(a.equals(b));
  Model c = train_standard(d, quick_cfg(10), kMlpArch);
  CHECK(!a.equals(c));
}

TEST_CASE("adversarial training with epsilon 0 equals standard training bit-exactly") {
  LabeledSet d = generate_synthetic(blob_spec(), 50, 29);
  PerturbationBudget zero{.epsilon = 0.0, .step_size = 0.05, .steps = 5};
  Model adv = train_adversarial(d, quick_cfg(7), zero, kMlpArch);
  Model std_ = train_standard(d, quick_cfg(7), kMlpArch);
  CHECK(adv.equals(std_));
}

TEST_CASE("adversarial training achieves robust separation when the gap allows it") {
  // blobs at (0,0) and (1,1), tight noise: inter-class L-inf gap well above 2 eps
  LabeledSet d = generate_synthetic(blob_spec(0.04), 60, 31);
  const double eps = 0.2;
  PerturbationBudget budget{.epsilon = eps, .step_size = 0.05, .steps = 10};
  TrainConfig cfg = quick_cfg(11, 250);
  Model f = train_adversarial(d, cfg, budget, kLinearArch);

  // exact linear attack oracle: the model is linear, so the worst case is
  // x - eps*y*sign(theta)
  Vec theta = (f.weights[0].row(1) - f.weights[0].row(0)).transpose();
  int wrong = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const int y_pm = d.labels[i] == 1 ? 1 : -1;
    Vec adv = d.features.row(i).transpose();
    for (Eigen::Index j = 0; j < adv.size(); ++j)
      adv[j] -= eps * y_pm * (theta[j] > 0 ? 1.0 : (theta[j] < 0 ? -1.0 : 0.0));
    if (forward(f, adv).label != d.labels[i]) ++wrong;
  }
  CHECK(wrong == 0);
}

TEST_CASE("adversarially trained models are more robust than standard ones in aggregate") {
  PerturbationBudget budget{.epsilon = 0.25, .step_size = 0.06, .steps = 10};
  double std_total = 0.0, adv_total = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    LabeledSet d = generate_synthetic(blob_spec(0.15), 40, 100 + s);
    TrainConfig cfg = quick_cfg(200 + s, 120);
    Model fs = train_standard(d, cfg, kMlpArch);
    Model fa = train_adversarial(d, cfg, budget, kMlpArch);
    LabeledSet attack_s = pgd_maximize({fs}, CompositeLoss::Single, d, budget, 300 + s);
    LabeledSet attack_a = pgd_maximize({fa}, CompositeLoss::Single, d, budget, 300 + s);
    std_total += empirical_loss(fs, attack_s, LossKind::ZeroOne);
    adv_total += empirical_loss(fa, attack_a, LossKind::ZeroOne);
  }
  CHECK(adv_total <= std_total);
}

TEST_CASE("adapt_identity returns the model unchanged") {
  Model f = make_binary_linear((Vec(2) << 1.0, -2.0).finished());
  LabeledSet d = generate_synthetic(blob_spec(), 10, 1);
  UnlabeledSet u = project_features(d);
  Model g = adapt_identity(f, d, u);
  CHECK(g.equals(f));
  CHECK(adapt_identity(g, d, u).equals(f));  // idempotent
}

TEST_CASE("feature_distance mean-feature cases") {
  // phi = identity via representation_cut 0
  Model f = make_binary_linear((Vec(2) << 1.0, 0.0).finished());

  LabeledSet d = generate_synthetic(blob_spec(), 20, 3);
  UnlabeledSet a = project_features(d);
  CHECK(feature_distance(f, a, a, Matcher::MeanFeature) == 0.0);

  Mat pa(1, 2), pb(1, 2);
  pa << 0.0, 0.0;
  pb << 3.0, 4.0;
  CHECK(feature_distance(f, UnlabeledSet{pa}, UnlabeledSet{pb}, Matcher::MeanFeature) ==
        doctest::Approx(25.0));

  SUBCASE("symmetry") {
    UnlabeledSet b{pb};
    UnlabeledSet aa{pa};
    CHECK(feature_distance(f, aa, b, Matcher::MeanFeature) ==
          feature_distance(f, b, aa, Matcher::MeanFeature));
  }
  SUBCASE("empty set rejected") {
    UnlabeledSet empty{Mat(0, 2)};
    CHECK_THROWS_AS(feature_distance(f, empty, a, Matcher::MeanFeature), EmptySetError);
  }
}

TEST_CASE("discriminator distance is near zero for identically distributed sets") {
  Model f = make_binary_linear((Vec(2) << 1.0, 0.0).finished());
  LabeledSet d1 = generate_synthetic(blob_spec(), 500, 41);
  LabeledSet d2 = generate_synthetic(blob_spec(), 500, 43);
  const double dist =
      feature_distance(f, project_features(d1), project_features(d2), Matcher::Discriminator);
  CHECK(dist < 0.05);

  // and clearly positive for separated point masses
  Mat xa = Mat::Zero(100, 2);
  Mat xb = Mat::Ones(100, 2);
  const double far =
      feature_distance(f, UnlabeledSet{xa}, UnlabeledSet{xb}, Matcher::Discriminator);
  CHECK(far > 0.3);
}

TEST_CASE("matching weight schedule") {
  CHECK(matching_weight(AlphaSchedule::Progressive, 0.1, 0.0) == 0.0);
  CHECK(matching_weight(AlphaSchedule::Progressive, 0.1, 1.0) ==
        doctest::Approx(0.1 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0)));
  CHECK(matching_weight(AlphaSchedule::Progressive, 0.1, 1.0) ==
        doctest::Approx(0.1 * 0.9999092).epsilon(1e-6));
  CHECK(matching_weight(AlphaSchedule::Constant, 0.07, 0.2) == 0.07);
}

TEST_CASE("adapt_retrain_matching with alpha 0 equals train_standard bit-exactly") {
  LabeledSet d = generate_synthetic(blob_spec(), 40, 51);
  LabeledSet v = generate_synthetic(blob_spec(), 30, 53);
  TrainConfig cfg = quick_cfg(13, 80);
  Model f0 = init_model(kMlpArch, RngStream(1));
  Model adapted = adapt_retrain_matching(f0, d, project_features(v), cfg, Matcher::MeanFeature,
                                         AlphaSchedule::Progressive, 0.0);
  Model plain = train_standard(d, cfg, kMlpArch);
  CHECK(adapted.equals(plain));
}

TEST_CASE("adapt_retrain_matching self-matching sanity") {
  LabeledSet d = generate_synthetic(blob_spec(), 60, 61);
  LabeledSet held = generate_synthetic(blob_spec(), 60, 63);
  TrainConfig cfg = quick_cfg(15, 120);
  Model f0 = init_model(kMlpArch, RngStream(2));
  Model adapted = adapt_retrain_matching(f0, d, project_features(d), cfg, Matcher::MeanFeature,
                                         AlphaSchedule::Progressive, 0.1);
  Model plain = train_standard(d, cfg, kMlpArch);

  const double match =
      feature_distance(adapted, project_features(d), project_features(d), Matcher::MeanFeature);
  CHECK(match == 0.0);  // identical sets have identical feature means
  const double acc_adapted = 1.0 - empirical_loss(adapted, held, LossKind::ZeroOne);
  const double acc_plain = 1.0 - empirical_loss(plain, held, LossKind::ZeroOne);
  CHECK(acc_adapted >= acc_plain - 0.02);
}

TEST_CASE("adapt_atrm reductions") {
  LabeledSet d = generate_synthetic(blob_spec(), 40, 71);
  LabeledSet v = generate_synthetic(blob_spec(), 20, 73);
  UnlabeledSet u = project_features(v);
  TrainConfig cfg = quick_cfg(17, 40);
  Model f0 = train_standard(d, quick_cfg(18, 60), kMlpArch);

  SUBCASE("epsilon_inner 0 and alpha 0 ignores the test batch entirely") {
    AtrmConfig a;
    a.alpha_max = 0.0;
    a.inner_budget = PerturbationBudget{.epsilon = 0.0, .step_size = 0.01, .steps = 1};
    Model m1 = adapt_atrm(f0, d, u, cfg, a);
    LabeledSet other = generate_synthetic(blob_spec(), 20, 75);
    Model m2 = adapt_atrm(f0, d, project_features(other), cfg, a);
    CHECK(m1.equals(m2));
    // warm start: fine-tuning from f0 keeps (or improves) training loss
    CHECK(empirical_loss(m1, d, LossKind::CrossEntropy) <=
          empirical_loss(f0, d, LossKind::CrossEntropy) + 1e-9);
  }
  SUBCASE("epochs 0 returns the warm start unchanged") {
    AtrmConfig a;
    a.inner_budget = PerturbationBudget{.epsilon = 0.1, .step_size = 0.05, .steps = 3};
    TrainConfig zero = cfg;
    zero.epochs = 0;
    Model m = adapt_atrm(f0, d, u, zero, a);
    CHECK(m.equals(f0));
  }
}

TEST_CASE("rmc neighbor selection matches a brute-force sort oracle") {
  RngStream rng(81);
  const int pool_n = 2000;
  Mat x(pool_n, 2);
  std::vector<int> y(pool_n);
  for (int i = 0; i < pool_n; ++i) {
    x(i, 0) = rng.uniform(-3, 3);
    x(i, 1) = rng.uniform(-3, 3);
    y[i] = static_cast<int>(rng.bounded(2));
  }
  LabeledSet pool{x, y};
  Model f = init_model(kMlpArch, RngStream(4));  // phi = hidden layer
  Vec target = (Vec(2) << 0.25, -0.5).finished();

  for (int k : {1, 7, 50}) {
    auto got = rmc_neighbors(f, pool, target, k);
    // oracle: full stable sort on (distance, index)
    Vec tphi = representation(f, target);
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index i = 0; i < pool.size(); ++i)
      all.push_back({(representation(f, pool.features.row(i).transpose()) - tphi).squaredNorm(), i});
    std::stable_sort(all.begin(), all.end());
    REQUIRE(static_cast<int>(got.size()) == k);
    for (int i = 0; i < k; ++i) CHECK(got[i] == all[i].second);
  }
}

TEST_CASE("adapt_rmc edge cases") {
  LabeledSet pool = generate_synthetic(blob_spec(), 40, 91);
  Model f = train_standard(pool, quick_cfg(19, 60), kMlpArch);

  SUBCASE("epochs 0 is a no-op") {
    RmcConfig r{4, pool, quick_cfg(20, 0)};
    CHECK(adapt_rmc(f, r, pool.features.row(0).transpose()).equals(f));
  }
  SUBCASE("query equal to a pool point with k=1 selects it") {
    auto nn = rmc_neighbors(f, pool, pool.features.row(7).transpose(), 1);
    CHECK(nn[0] == 7);
  }
  SUBCASE("k equal to pool size fine-tunes on everything") {
    auto nn = rmc_neighbors(f, pool, pool.features.row(0).transpose(),
                            static_cast<int>(pool.size()));
    CHECK(nn.size() == static_cast<std::size_t>(pool.size()));
    RmcConfig r{static_cast<int>(pool.size()), pool, quick_cfg(21, 10)};
    Model m = adapt_rmc(f, r, pool.features.row(0).transpose());
    CHECK(!m.equals(f));  // it actually trained
  }
  SUBCASE("k out of range rejected") {
    CHECK_THROWS_AS(rmc_neighbors(f, pool, pool.features.row(0).transpose(), 0), BadParams);
    CHECK_THROWS_AS(
        rmc_neighbors(f, pool, pool.features.row(0).transpose(), static_cast<int>(pool.size()) + 1),
        BadParams);
  }
}

TEST_CASE("divergent learning rate raises NumericError") {
  LabeledSet d = generate_synthetic(blob_spec(), 30, 95);
  TrainConfig cfg = quick_cfg(22, 50);
  cfg.learning_rate = 1e9;
  CHECK_THROWS_AS(train_standard(d, cfg, kMlpArch), NumericError);
}
