#pragma once

#include <cstdint>

#include "trgame/core.hpp"
#include "trgame/rng.hpp"

namespace trgame {

/// Complementary error function, accurate to ~1e-14 absolute: power series
/// for small arguments, Lentz continued fraction for the tail.
double erfc_cf(double x);

/// Standard normal upper-tail probability Q(x) = erfc(x / sqrt(2)) / 2.
double q_function(double x);

/// Two-Gaussian binary task: y uniform on {-1,+1}, x | y ~ N(y mu, sigma^2 I),
/// ||mu||^2 = d, under an L-infinity attack of radius epsilon.
///
/// Derived quantities: n0 = sigma^4 / d, m = round(10 n0) samples fit the
/// mean-estimator direction, m' = round(K n0) samples back the test-time
/// margin check, t = sigma (sqrt(n0/d) + n0/m)^(-1/2) is the margin threshold.
struct GaussianInstance {
  int d = 2;
  Vec mu;
  double sigma = 1.0;
  double epsilon = 0.0;
  double accuracy_nu = 0.1;  // the theorem's accuracy level (distinct from epsilon)
  double n0 = 1.0;
  double K = 1.0;
  int m = 1;
  int m_prime = 1;

  double threshold_t() const;
  void validate() const;

  /// Instance with sigma^2 = c1 sqrt(d ln(1/nu)) and mu = sqrt(d) times a
  /// seeded random unit direction (a Householder reflection of e1, so the
  /// norm is exact). k_over_n0 scales the margin-check sample count.
  static GaussianInstance theorem_regime(int d, double nu, double c1, double epsilon,
                                         double k_over_n0, std::uint64_t mu_seed);
};

/// n i.i.d. draws; +-1 labels stored as classes {0, 1} (y = 2*label - 1).
LabeledSet sample_data(const GaussianInstance& inst, int n, RngStream rng);

/// Normalized mean estimator: theta_bar = (1/m sum y_i x_i) / ||.||.
Vec fit_mean_direction(const LabeledSet& d2);

/// The two unit-margin classifiers tilted from theta_bar along x':
/// theta_+- = theta_bar + eta_+- * x'/||x'||, with
/// eta_+- = (+-gamma - theta_bar.x') / ||x'|| and gamma = ||x'|| / 2.
struct MarginPair {
  Vec theta_bar;
  Vec theta_plus, theta_minus;
  Vec theta_bar_plus, theta_bar_minus;
  double eta_plus = 0.0, eta_minus = 0.0;
  double gamma = 0.0;
  double t = 0.0;
};

MarginPair build_margin_pair(const Vec& theta_bar, const Vec& x_prime,
                             const GaussianInstance& inst);

/// Fraction of d1 with margin y * theta.x <= t.
double margin_error_empirical(const Vec& theta, const LabeledSet& d1, double t);

/// Population value Q((mu.theta - t) / (sigma ||theta||)).
double margin_error_analytic(const Vec& theta, const GaussianInstance& inst, double t);

/// Pick the tilted classifier with the smaller empirical margin error on d1
/// (ties go to +1) and return the label it assigns to x'.
int transductive_classify(const MarginPair& pair, const LabeledSet& d1);

/// Exact worst-case L-infinity perturbation against a linear classifier:
/// x - epsilon * y * sign(theta), sign(0) = 0.
Vec optimal_linear_attack(const Vec& x, int y_pm, const Vec& theta, double epsilon);

struct WilsonInterval {
  double lo = 0.0, hi = 1.0;
};
WilsonInterval wilson95(int successes, int n);

struct SeparationReport {
  int trials = 0;
  int inductive_errors = 0;
  int transductive_errors = 0;
  double inductive_error = 0.0;
  double transductive_error = 0.0;
  WilsonInterval inductive_ci, transductive_ci;
  // per-trial analytic oracle for the attacked inductive arm
  double mean_analytic_inductive_error = 0.0;
  // band diagnostics
  double frac_theta_mu_in_band = 0.0;  // theta_bar.mu in [sigma/2, 10 sigma]
  double frac_xnorm_in_band = 0.0;     // ||x'|| in [sigma sqrt(d)/4, 2 sigma sqrt(d)]
  std::vector<int> inductive_err_flags;  // per trial, for CSV output
  std::vector<int> transductive_err_flags;
};

/// Monte Carlo comparison of the two arms. Per trial: sample D (m' + m
/// points, split D1 then D2) and one test point, attack it against the
/// mean-estimator direction fitted on D2, classify with sign(theta_bar . x')
/// and with the margin-pair rule. Trials run in parallel on substreams
/// derived from (seed, trial).
SeparationReport run_separation(const GaussianInstance& inst, int trials, std::uint64_t seed);

}  // namespace trgame
