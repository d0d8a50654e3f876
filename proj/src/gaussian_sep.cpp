#include "trgame/gaussian_sep.hpp"

#include <cmath>

#include "trgame/parallel.hpp"

namespace trgame {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInvSqrtPi = 0.56418958354775628694807945156077;
}  // namespace

double erfc_cf(double x) {
  if (x < 0.0) return 2.0 - erfc_cf(-x);
  if (x < 2.0) {
    // erf power series: 2/sqrt(pi) sum (-1)^n x^(2n+1) / (n! (2n+1))
    const double x2 = x * x;
    double term = x;
    double sum = x;
    for (int n = 1; n < 80; ++n) {
      term *= -x2 / n;
      const double add = term / (2 * n + 1);
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return 1.0 - 2.0 * kInvSqrtPi * sum;
  }
  // tail: erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
  // evaluated with modified Lentz; a_1 = 1, a_n = (n-1)/2, b_n = x
  const double tiny = 1e-300;
  double f = tiny, c = f, d = 0.0;
  for (int n = 1; n <= 300; ++n) {
    const double an = n == 1 ? 1.0 : (n - 1) / 2.0;
    d = x + an * d;
    if (d == 0.0) d = tiny;
    c = x + an / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x * x) * kInvSqrtPi * f;
}

double q_function(double x) { return 0.5 * erfc_cf(x / kSqrt2); }

double GaussianInstance::threshold_t() const {
  return sigma / std::sqrt(std::sqrt(n0 / d) + n0 / static_cast<double>(m));
}

void GaussianInstance::validate() const {
  if (d < 1) throw BadParams("GaussianInstance: d must be positive");
  if (mu.size() != d) throw DimMismatch("GaussianInstance: mu dim != d");
  const double nsq = mu.squaredNorm();
  if (std::abs(nsq - d) > 1e-6 * d) throw BadParams("GaussianInstance: ||mu||^2 must equal d");
  if (!(sigma > 0.0)) throw BadParams("GaussianInstance: sigma must be > 0");
  if (!(epsilon >= 0.0)) throw BadParams("GaussianInstance: epsilon must be >= 0");
  if (accuracy_nu <= 0.0 || accuracy_nu >= 1.0)
    throw BadParams("GaussianInstance: nu must be in (0,1)");
  const double expect_n0 = sigma * sigma * sigma * sigma / d;
  if (std::abs(n0 - expect_n0) > 1e-9 * expect_n0)
    throw BadParams("GaussianInstance: n0 != sigma^4/d");
  if (m < 1 || m_prime < 1) throw BadParams("GaussianInstance: m, m' must be >= 1");
}

GaussianInstance theorem_regime_impl(int d, double nu, double c1, double epsilon,
                                     double k_over_n0, std::uint64_t mu_seed) {
  GaussianInstance inst;
  inst.d = d;
  inst.accuracy_nu = nu;
  inst.epsilon = epsilon;
  const double sigma2 = c1 * std::sqrt(d * std::log(1.0 / nu));
  inst.sigma = std::sqrt(sigma2);
  inst.n0 = sigma2 * sigma2 / d;
  inst.K = k_over_n0 * inst.n0;
  inst.m = std::max(1, static_cast<int>(std::llround(10.0 * inst.n0)));
  inst.m_prime = std::max(1, static_cast<int>(std::llround(inst.K * inst.n0)));

  // mu = sqrt(d) * H e1 where H is the Householder reflection mapping e1 to a
  // seeded random unit direction; reflections preserve the norm exactly.
  RngStream rng(mu_seed);
  Vec u(d);
  for (int j = 0; j < d; ++j) u[j] = rng.normal();
  u /= u.norm();
  inst.mu = std::sqrt(static_cast<double>(d)) * u;
  inst.validate();
  return inst;
}

GaussianInstance GaussianInstance::theorem_regime(int d, double nu, double c1, double epsilon,
                                                  double k_over_n0, std::uint64_t mu_seed) {
  return theorem_regime_impl(d, nu, c1, epsilon, k_over_n0, mu_seed);
}

LabeledSet sample_data(const GaussianInstance& inst, int n, RngStream rng) {
  if (n < 1) throw BadParams("sample_data: n must be >= 1");
  LabeledSet out;
  out.features.resize(n, inst.d);
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.bounded(2));  // {0,1} <-> y = 2*label-1
    const double y = 2.0 * label - 1.0;
    for (int j = 0; j < inst.d; ++j)
      out.features(i, j) = y * inst.mu[j] + inst.sigma * rng.normal();
    out.labels[i] = label;
  }
  return out;
}

Vec fit_mean_direction(const LabeledSet& d2) {
  if (d2.size() == 0) throw EmptySetError("fit_mean_direction: empty set");
  Vec acc = Vec::Zero(d2.dim());
  for (Eigen::Index i = 0; i < d2.size(); ++i) {
    const double y = 2.0 * d2.labels[i] - 1.0;
    acc += y * d2.features.row(i).transpose();
  }
  acc /= static_cast<double>(d2.size());
  const double norm = acc.norm();
  if (norm < 1e-12) throw DegenerateEstimate("fit_mean_direction: estimator is ~0");
  return acc / norm;
}

MarginPair build_margin_pair(const Vec& theta_bar, const Vec& x_prime,
                             const GaussianInstance& inst) {
  const double xnorm = x_prime.norm();
  if (xnorm == 0.0) throw ZeroInput("build_margin_pair: x' is zero");
  MarginPair p;
  p.theta_bar = theta_bar;
  const Vec x_bar = x_prime / xnorm;
  p.gamma = xnorm / 2.0;
  const double proj = theta_bar.dot(x_prime);
  p.eta_plus = (p.gamma - proj) / xnorm;
  p.eta_minus = (-p.gamma - proj) / xnorm;
  p.theta_plus = theta_bar + p.eta_plus * x_bar;
  p.theta_minus = theta_bar + p.eta_minus * x_bar;
  p.theta_bar_plus = p.theta_plus / p.theta_plus.norm();
  p.theta_bar_minus = p.theta_minus / p.theta_minus.norm();
  p.t = inst.threshold_t();
  return p;
}

double margin_error_empirical(const Vec& theta, const LabeledSet& d1, double t) {
  if (d1.size() == 0) throw EmptySetError("margin_error_empirical: empty set");
  Eigen::Index fails = 0;
  for (Eigen::Index i = 0; i < d1.size(); ++i) {
    const double y = 2.0 * d1.labels[i] - 1.0;
    if (y * theta.dot(d1.features.row(i).transpose()) <= t) ++fails;
  }
  return static_cast<double>(fails) / static_cast<double>(d1.size());
}

double margin_error_analytic(const Vec& theta, const GaussianInstance& inst, double t) {
  const double norm = theta.norm();
  if (norm == 0.0) throw ZeroInput("margin_error_analytic: zero vector");
  return q_function((inst.mu.dot(theta) - t) / (inst.sigma * norm));
}

int transductive_classify(const MarginPair& pair, const LabeledSet& d1) {
  const double err_plus = margin_error_empirical(pair.theta_bar_plus, d1, pair.t);
  const double err_minus = margin_error_empirical(pair.theta_bar_minus, d1, pair.t);
  return err_plus <= err_minus ? +1 : -1;
}

Vec optimal_linear_attack(const Vec& x, int y_pm, const Vec& theta, double epsilon) {
  Vec out = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double s = theta[j] > 0.0 ? 1.0 : (theta[j] < 0.0 ? -1.0 : 0.0);
    out[j] -= epsilon * y_pm * s;
  }
  return out;
}

WilsonInterval wilson95(int successes, int n) {
  const double z = 1.959963984540054;  // Phi^-1(0.975)
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double den = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * static_cast<double>(n) * n));
  return {(center - half) / den, (center + half) / den};
}

SeparationReport run_separation(const GaussianInstance& inst, int trials, std::uint64_t seed) {
  if (trials < 1) throw BadParams("run_separation: trials must be >= 1");
  inst.validate();

  struct TrialOut {
    int ind_err = 0, trans_err = 0;
    double analytic_ind = 0.0;
    bool theta_mu_ok = false, xnorm_ok = false;
  };
  std::vector<TrialOut> rows(trials);
  RngStream trial_root = RngStream(seed).child(rng_role::kTrial);

  par::for_each_index(trials, [&](std::ptrdiff_t tr) {
    RngStream rng = trial_root.child(static_cast<std::uint64_t>(tr));
    // D1 holds the first m' points, D2 the next m; V is a single point
    LabeledSet d_all = sample_data(inst, inst.m_prime + inst.m, rng.child(0));
    LabeledSet d1{d_all.features.topRows(inst.m_prime),
                  {d_all.labels.begin(), d_all.labels.begin() + inst.m_prime}};
    LabeledSet d2{d_all.features.bottomRows(inst.m),
                  {d_all.labels.begin() + inst.m_prime, d_all.labels.end()}};
    LabeledSet v = sample_data(inst, 1, rng.child(1));
    const int y = 2 * v.labels[0] - 1;
    const Vec x = v.features.row(0).transpose();

    Vec theta_bar = fit_mean_direction(d2);
    Vec x_prime = optimal_linear_attack(x, y, theta_bar, inst.epsilon);

    TrialOut& o = rows[tr];
    const int ind_pred = theta_bar.dot(x_prime) >= 0.0 ? +1 : -1;
    o.ind_err = ind_pred != y ? 1 : 0;
    // attacked-margin oracle: the clean margin is N(mu.theta, sigma^2) and the
    // attack shifts it by epsilon * ||theta||_1
    o.analytic_ind =
        margin_error_analytic(theta_bar, inst, inst.epsilon * theta_bar.lpNorm<1>());

    MarginPair pair = build_margin_pair(theta_bar, x_prime, inst);
    o.trans_err = transductive_classify(pair, d1) != y ? 1 : 0;

    const double tm = theta_bar.dot(inst.mu);
    o.theta_mu_ok = tm >= inst.sigma / 2.0 && tm <= 10.0 * inst.sigma;
    const double xn = x_prime.norm();
    const double sd = inst.sigma * std::sqrt(static_cast<double>(inst.d));
    o.xnorm_ok = xn >= sd / 4.0 && xn <= 2.0 * sd;
  });

  SeparationReport rep;
  rep.trials = trials;
  rep.inductive_err_flags.resize(trials);
  rep.transductive_err_flags.resize(trials);
  int band_tm = 0, band_xn = 0;
  double analytic = 0.0;
  for (int tr = 0; tr < trials; ++tr) {
    rep.inductive_errors += rows[tr].ind_err;
    rep.transductive_errors += rows[tr].trans_err;
    rep.inductive_err_flags[tr] = rows[tr].ind_err;
    rep.transductive_err_flags[tr] = rows[tr].trans_err;
    analytic += rows[tr].analytic_ind;
    band_tm += rows[tr].theta_mu_ok;
    band_xn += rows[tr].xnorm_ok;
  }
  rep.inductive_error = static_cast<double>(rep.inductive_errors) / trials;
  rep.transductive_error = static_cast<double>(rep.transductive_errors) / trials;
  rep.inductive_ci = wilson95(rep.inductive_errors, trials);
  rep.transductive_ci = wilson95(rep.transductive_errors, trials);
  rep.mean_analytic_inductive_error = analytic / trials;
  rep.frac_theta_mu_in_band = static_cast<double>(band_tm) / trials;
  rep.frac_xnorm_in_band = static_cast<double>(band_xn) / trials;
  return rep;
}

}  // namespace trgame
