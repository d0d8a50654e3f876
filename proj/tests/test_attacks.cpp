#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "trgame/attacks.hpp"
#include "trgame/data.hpp"
#include "trgame/learners.hpp"
#include "trgame/rng.hpp"

using namespace trgame;

namespace {

LabeledSet random_labeled(RngStream& rng, int n, int d) {
  Mat x(n, d);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = rng.uniform(-1, 1);
    y[i] = static_cast<int>(rng.bounded(2));
  }
  return LabeledSet{x, y};
}

}  // namespace

TEST_CASE("pgd with epsilon 0 returns the clean features") {
  RngStream rng(1);
  LabeledSet v = random_labeled(rng, 10, 3);
  Model f = make_binary_linear((Vec(3) << 1.0, -2.0, 0.5).finished());
  PerturbationBudget b{.epsilon = 0.0, .step_size = 0.1, .steps = 5, .random_init = true};
  LabeledSet out = pgd_maximize({f}, CompositeLoss::Single, v, b, 99);
  CHECK(out.features == v.features);
  CHECK(out.labels == v.labels);
}

TEST_CASE("pgd on a linear model reaches the closed-form corner") {
  RngStream rng(2);
  for (int inst = 0; inst < 50; ++inst) {
    const int d = 1 + static_cast<int>(rng.bounded(6));
    Vec theta(d);
    for (int j = 0; j < d; ++j) theta[j] = rng.uniform(-2, 2);
    if (rng.bounded(4) == 0) theta[rng.bounded(static_cast<std::uint64_t>(d))] = 0.0;
    Model f = make_binary_linear(theta);
    LabeledSet v = random_labeled(rng, 4, d);
    const double eps = rng.uniform(0.05, 0.4);
    PerturbationBudget b{.epsilon = eps, .step_size = eps / 7, .steps = 10};

    LabeledSet out = pgd_maximize({f}, CompositeLoss::Single, v, b, 7);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const int y_pm = v.labels[i] == 1 ? 1 : -1;
      // closed form when no clipping binds
      for (Eigen::Index j = 0; j < d; ++j) {
        const double s = theta[j] > 0 ? 1.0 : (theta[j] < 0 ? -1.0 : 0.0);
        CHECK(out.features(i, j) == doctest::Approx(v.features(i, j) - eps * y_pm * s));
      }
      // and it attains the corner-search optimum of the adversarial loss
      Vec best = oracle::corner_search_linear(v.features.row(i).transpose(), y_pm, theta, b);
      const double got = example_loss(f, out.features.row(i).transpose(), v.labels[i],
                                      LossKind::CrossEntropy);
      const double opt = example_loss(f, best, v.labels[i], LossKind::CrossEntropy);
      CHECK(got >= opt - 1e-6);
    }
  }
}

TEST_CASE("one model repeated twice under Avg equals Single with the same seed") {
  RngStream rng(3);
  LabeledSet v = random_labeled(rng, 8, 4);
  ModelSpec arch{{4, 6, 2}, 1};
  Model f = init_model(arch, RngStream(5));
  PerturbationBudget b{.epsilon = 0.2, .step_size = 0.05, .steps = 12, .random_init = true};
  LabeledSet single = pgd_maximize({f}, CompositeLoss::Single, v, b, 42);
  LabeledSet avg2 = pgd_maximize({f, f}, CompositeLoss::Avg, v, b, 42);
  LabeledSet min2 = pgd_maximize({f, f}, CompositeLoss::Min, v, b, 42);
  CHECK(single.features == avg2.features);
  CHECK(single.features == min2.features);
}

TEST_CASE("attack feasibility and label preservation") {
  RngStream rng(4);
  LabeledSet v = random_labeled(rng, 12, 3);
  ModelSpec arch{{3, 5, 2}, 1};
  std::vector<Model> models{init_model(arch, RngStream(6)), init_model(arch, RngStream(7))};
  PerturbationBudget b{.epsilon = 0.15, .step_size = 0.04, .steps = 20, .random_init = true};
  for (auto mode : {CompositeLoss::Avg, CompositeLoss::Min}) {
    LabeledSet out = pgd_maximize(models, mode, v, b, 11);
    CHECK(out.labels == v.labels);
    CHECK(in_neighborhood(v, out, b));
  }
}

TEST_CASE("composite losses obey Min <= Avg <= Max pointwise") {
  RngStream rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 2 + static_cast<int>(rng.bounded(3));
    const int n_models = 1 + static_cast<int>(rng.bounded(4));
    ModelSpec arch{{d, 4, 2}, 1};
    std::vector<Model> models;
    for (int m = 0; m < n_models; ++m)
      models.push_back(init_model(arch, rng.child(static_cast<std::uint64_t>(trial * 7 + m))));
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = rng.uniform(-1, 1);
    const int y = static_cast<int>(rng.bounded(2));

    const double lo = composite_example_loss(models, CompositeLoss::Min, x, y);
    const double mid = composite_example_loss(models, CompositeLoss::Avg, x, y);
    double hi = lo;
    for (const Model& m : models)
      hi = std::max(hi, example_loss(m, x, y, LossKind::CrossEntropy));
    CHECK(lo <= mid + 1e-12);
    CHECK(mid <= hi + 1e-12);
  }
}

TEST_CASE("select_best breaks ties toward the smallest index") {
  AttackHistory h;
  h.valuations = {0.2, 0.9, 0.9};
  CHECK(select_best(h) == 1);
  h.valuations = {0.4};
  CHECK(select_best(h) == 0);
  h.valuations = {0.7, 0.7, 0.7};
  CHECK(select_best(h) == 0);
  h.valuations.clear();
  CHECK_THROWS_AS(select_best(h), EmptyHistory);
}

TEST_CASE("fpa with T=0 is a single PGD attack") {
  RngStream rng(9);
  LabeledSet d = random_labeled(rng, 20, 2);
  LabeledSet v = random_labeled(rng, 10, 2);
  Model f = make_binary_linear((Vec(2) << 1.5, -0.5).finished());
  PerturbationBudget b{.epsilon = 0.1, .step_size = 0.03, .steps = 8, .random_init = true};
  IdentityAdaptor id;

  AttackHistory h = fpa(id, d, v, f, 0, b, 77);
  CHECK(h.valuations.size() == 1);
  CHECK(h.attack_sets.size() == 1);
  CHECK(h.models.size() == 2);

  const std::uint64_t pgd_seed = RngStream(77).child(rng_role::kPgd).child(0).seed();
  LabeledSet plain = pgd_maximize({f}, CompositeLoss::Single, v, b, pgd_seed);
  CHECK(h.attack_sets[0].features == plain.features);
  CHECK(h.valuations[0] == empirical_loss(f, plain, LossKind::ZeroOne));
}

TEST_CASE("gmsa iteration 0 coincides with fpa iteration 0 bit-exactly") {
  RngStream rng(10);
  LabeledSet d = random_labeled(rng, 16, 3);
  LabeledSet v = random_labeled(rng, 8, 3);
  ModelSpec arch{{3, 4, 2}, 1};
  Model f = init_model(arch, RngStream(12));
  PerturbationBudget b{.epsilon = 0.2, .step_size = 0.05, .steps = 6, .random_init = true};
  IdentityAdaptor id;

  AttackHistory hf = fpa(id, d, v, f, 0, b, 31);
  AttackHistory ha = gmsa(id, d, v, f, 0, GmsaMode::Avg, b, 31);
  AttackHistory hm = gmsa(id, d, v, f, 0, GmsaMode::Min, b, 31);
  CHECK(hf.attack_sets[0].features == ha.attack_sets[0].features);
  CHECK(hf.attack_sets[0].features == hm.attack_sets[0].features);
  CHECK(hf.valuations[0] == ha.valuations[0]);
  CHECK(hf.valuations[0] == hm.valuations[0]);
}

TEST_CASE("gmsa with the identity adaptor reduces to PGD on F0 at every iteration") {
  RngStream rng(11);
  LabeledSet d = random_labeled(rng, 16, 2);
  LabeledSet v = random_labeled(rng, 10, 2);
  Model f = make_binary_linear((Vec(2) << 0.8, 1.2).finished());
  PerturbationBudget b{.epsilon = 0.15, .step_size = 0.04, .steps = 5, .random_init = true};
  IdentityAdaptor id;

  for (auto mode : {GmsaMode::Avg, GmsaMode::Min}) {
    AttackHistory h = gmsa(id, d, v, f, 3, mode, b, 55);
    RngStream pgd_root = RngStream(55).child(rng_role::kPgd);
    for (int i = 0; i <= 3; ++i) {
      PerturbationBudget bi = b;
      if (mode == GmsaMode::Min) bi.steps *= (i + 1);
      LabeledSet plain = pgd_maximize({f}, CompositeLoss::Single, v, bi,
                                      pgd_root.child(static_cast<std::uint64_t>(i)).seed());
      CHECK(h.attack_sets[i].features == plain.features);
    }
  }
}

TEST_CASE("gmsa selected valuation is monotone in the iteration budget") {
  RngStream rng(12);
  LabeledSet d = random_labeled(rng, 12, 2);
  LabeledSet v = random_labeled(rng, 8, 2);
  ModelSpec arch{{2, 4, 2}, 1};
  Model f = init_model(arch, RngStream(13));
  PerturbationBudget b{.epsilon = 0.25, .step_size = 0.06, .steps = 5, .random_init = true};
  // a cheap but non-trivial adaptor keeps the model space moving
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.2;
  RetrainMatchingAdaptor gamma(cfg, Matcher::MeanFeature, AlphaSchedule::Progressive, 0.05);

  for (auto mode : {GmsaMode::Avg, GmsaMode::Min}) {
    double prev = -1.0;
    for (int t = 0; t <= 3; ++t) {
      AttackHistory h = gmsa(gamma, d, v, f, t, mode, b, 91);
      const double sel = h.valuations[h.selected];
      CHECK(sel >= prev - 1e-15);
      prev = sel;
    }
  }
}

TEST_CASE("transfer_attack aliases single-model PGD") {
  RngStream rng(14);
  LabeledSet v = random_labeled(rng, 6, 3);
  ModelSpec arch{{3, 4, 2}, 1};
  Model f = init_model(arch, RngStream(15));
  PerturbationBudget b{.epsilon = 0.1, .step_size = 0.02, .steps = 10, .random_init = true};
  CHECK(transfer_attack(f, v, b, 123).features ==
        pgd_maximize({f}, CompositeLoss::Single, v, b, 123).features);
}

TEST_CASE("gmsa-avg against two fixed linear models attains the grid-search maximum") {
  // both models push the same quadrant, so sign-PGD reaches the joint optimum
  Model a = make_binary_linear((Vec(2) << 1.0, 2.0).finished());
  Model b_model = make_binary_linear((Vec(2) << 2.0, 1.0).finished());
  Mat x(3, 2);
  x << 0.1, -0.2, 0.0, 0.3, -0.15, 0.05;
  LabeledSet v{x, {1, 0, 1}};
  PerturbationBudget budget{.epsilon = 0.3, .step_size = 0.05, .steps = 12};

  // adaptor pinned to model B regardless of input
  class FixedAdaptor final : public Adaptor {
   public:
    explicit FixedAdaptor(Model m) : m_(std::move(m)) {}
    Model adapt(const Model&, const LabeledSet&, const UnlabeledSet&, RngStream) const override {
      return m_;
    }
    std::string name() const override { return "fixed"; }

   private:
    Model m_;
  };
  FixedAdaptor gamma(b_model);

  AttackHistory h = gmsa(gamma, LabeledSet{Mat(1, 2), {0}}, v, a, 1, GmsaMode::Avg, budget, 5);
  const std::vector<Model> pair{a, b_model};
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // 101x101 grid over the epsilon box
    double grid_best = -1.0;
    for (int gi = 0; gi <= 100; ++gi)
      for (int gj = 0; gj <= 100; ++gj) {
        Vec cand(2);
        cand[0] = v.features(i, 0) - budget.epsilon + 2 * budget.epsilon * gi / 100.0;
        cand[1] = v.features(i, 1) - budget.epsilon + 2 * budget.epsilon * gj / 100.0;
        grid_best = std::max(grid_best,
                             composite_example_loss(pair, CompositeLoss::Avg, cand, v.labels[i]));
      }
    const double got = composite_example_loss(
        pair, CompositeLoss::Avg, h.attack_sets[1].features.row(i).transpose(), v.labels[i]);
    CHECK(got >= grid_best - 1e-6);
  }
}

// ---------------------------------------------------------------------------
// the constructed 1-D switching defense: iterating on a single model's
// fixed point misses the attack that the averaged model space finds
// ---------------------------------------------------------------------------

namespace {

struct SwitchingDefense final : public Adaptor {
  Model a, b;
  SwitchingDefense()
      : a(make_binary_linear((Vec(1) << 0.5).finished(), -0.065)),
        b(make_binary_linear((Vec(1) << -1.83).finished(), 0.30)) {}
  Model adapt(const Model&, const LabeledSet&, const UnlabeledSet& u, RngStream) const override {
    return u.features.mean() >= 0.0 ? a : b;
  }
  std::string name() const override { return "switching"; }
};

LabeledSet switching_instance() {
  Mat x(12, 1);
  std::vector<int> y;
  x(0, 0) = 1.46;
  y.push_back(1);
  for (int i = 1; i <= 8; ++i) {
    x(i, 0) = 0.0;
    y.push_back(1);
  }
  for (int i = 9; i < 12; ++i) {
    x(i, 0) = 0.7;
    y.push_back(0);
  }
  return LabeledSet{x, y};
}

/// Exact optimum of the switching-defense objective over a per-point grid:
/// for each branch, greedily trade mistakes for mean mass until the branch
/// trigger is satisfied.
double switching_grid_oracle(const SwitchingDefense& gamma, const LabeledSet& v, double eps,
                             int grid) {
  const Eigen::Index n = v.size();
  double best = 0.0;
  for (int branch = 0; branch < 2; ++branch) {
    const Model& m = branch == 0 ? gamma.a : gamma.b;
    // per point: extreme mean-contribution among erring / non-erring positions
    std::vector<double> err_hi(n, -1e300), ok_hi(n, -1e300), err_lo(n, 1e300), ok_lo(n, 1e300);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int g = 0; g <= grid; ++g) {
        Vec cand(1);
        cand[0] = v.features(i, 0) - eps + 2 * eps * g / grid;
        const bool errs = forward(m, cand).label != v.labels[i];
        if (errs) {
          err_hi[i] = std::max(err_hi[i], cand[0]);
          err_lo[i] = std::min(err_lo[i], cand[0]);
        } else {
          ok_hi[i] = std::max(ok_hi[i], cand[0]);
          ok_lo[i] = std::min(ok_lo[i], cand[0]);
        }
      }
    }
    if (branch == 0) {
      // need a nonnegative mean: start from all-err at max contribution and
      // swap out the worst offenders
      double sum = 0.0;
      std::vector<double> gain(n);
      int errs = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (err_hi[i] > -1e299) {
          sum += err_hi[i];
          gain[i] = ok_hi[i] > -1e299 ? ok_hi[i] - err_hi[i] : -1e300;
          ++errs;
        } else {
          sum += ok_hi[i];
          gain[i] = -1e300;
        }
      }
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::sort(order.begin(), order.end(),
                [&](Eigen::Index p, Eigen::Index q) { return gain[p] > gain[q]; });
      std::size_t at = 0;
      while (sum < 0.0 && at < order.size() && gain[order[at]] > -1e299) {
        sum += gain[order[at]];
        --errs;
        ++at;
      }
      if (sum >= 0.0) best = std::max(best, static_cast<double>(errs) / n);
    } else {
      // mirrored: need a strictly negative mean
      double sum = 0.0;
      std::vector<double> gain(n);
      int errs = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (err_lo[i] < 1e299) {
          sum += err_lo[i];
          gain[i] = ok_lo[i] < 1e299 ? err_lo[i] - ok_lo[i] : -1e300;
          ++errs;
        } else {
          sum += ok_lo[i];
          gain[i] = -1e300;
        }
      }
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::sort(order.begin(), order.end(),
                [&](Eigen::Index p, Eigen::Index q) { return gain[p] > gain[q]; });
      std::size_t at = 0;
      while (sum >= 0.0 && at < order.size() && gain[order[at]] > -1e299) {
        sum -= gain[order[at]];
        --errs;
        ++at;
      }
      if (sum < 0.0) best = std::max(best, static_cast<double>(errs) / n);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("switching defense: fpa stalls below 0.5 while gmsa-avg clears 0.9") {
  SwitchingDefense gamma;
  LabeledSet v = switching_instance();
  LabeledSet d{Mat::Zero(1, 1), {0}};  // unused by the defense
  PerturbationBudget b{.epsilon = 0.68, .step_size = 0.085, .steps = 40};

  AttackHistory hf = fpa(gamma, d, v, gamma.a, 5, b, 1);
  AttackHistory hg = gmsa(gamma, d, v, gamma.a, 5, GmsaMode::Avg, b, 1);
  const double fpa_best = hf.valuations[hf.selected];
  const double gmsa_best = hg.valuations[hg.selected];

  CHECK(fpa_best < 0.5);
  CHECK(gmsa_best >= 0.9);
  // the valuations genuinely oscillate under fpa
  CHECK(hf.valuations[0] != hf.valuations[1]);
  CHECK(hf.valuations[0] == hf.valuations[2]);

  // grid brute force confirms both claims
  const double oracle_best = switching_grid_oracle(gamma, v, b.epsilon, 200);
  CHECK(oracle_best >= 0.9);
  CHECK(gmsa_best <= oracle_best + 1e-12);
  CHECK(fpa_best < oracle_best - 0.5);
}
