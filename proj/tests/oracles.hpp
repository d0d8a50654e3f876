// Independent oracles used by the test suites. These deliberately avoid the
// library's differentiation and search code paths.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "trgame/core.hpp"
#include "trgame/model.hpp"

namespace trgame::oracle {

/// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double at, double h = 1e-5) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

/// Finite-difference gradient of the cross-entropy w.r.t. the input.
inline Vec fd_input_grad(const Model& m, const Vec& x, int y, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (example_loss(m, xp, y, LossKind::CrossEntropy) -
            example_loss(m, xm, y, LossKind::CrossEntropy)) /
           (2.0 * h);
  }
  return g;
}

/// Finite-difference gradient w.r.t. one weight entry / bias entry.
inline double fd_weight_grad(Model m, const Vec& x, int y, int layer, int r, int c,
                             double h = 1e-5) {
  const double orig = m.weights[layer](r, c);
  m.weights[layer](r, c) = orig + h;
  const double up = example_loss(m, x, y, LossKind::CrossEntropy);
  m.weights[layer](r, c) = orig - h;
  const double dn = example_loss(m, x, y, LossKind::CrossEntropy);
  return (up - dn) / (2.0 * h);
}

inline double fd_bias_grad(Model m, const Vec& x, int y, int layer, int r, double h = 1e-5) {
  const double orig = m.biases[layer][r];
  m.biases[layer][r] = orig + h;
  const double up = example_loss(m, x, y, LossKind::CrossEntropy);
  m.biases[layer][r] = orig - h;
  const double dn = example_loss(m, x, y, LossKind::CrossEntropy);
  return (up - dn) / (2.0 * h);
}

inline bool close_rel(double a, double b, double rel = 1e-4, double abs_floor = 1e-7) {
  const double diff = std::abs(a - b);
  if (diff <= abs_floor) return true;
  return diff <= rel * std::max(std::abs(a), std::abs(b));
}

/// Exhaustive corner search of min_y theta_dot over the (possibly clipped)
/// epsilon box; returns the adversarial input minimizing y * theta . x'.
/// Only for dim <= 20.
inline Vec corner_search_linear(const Vec& x, int y_pm, const Vec& theta,
                                const PerturbationBudget& budget) {
  const Eigen::Index d = x.size();
  Vec best;
  double best_margin = std::numeric_limits<double>::infinity();
  for (long mask = 0; mask < (1L << d); ++mask) {
    Vec cand(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = (mask >> j) & 1 ? x[j] + budget.epsilon : x[j] - budget.epsilon;
      if (budget.clip_unit_box) v = std::clamp(v, 0.0, 1.0);
      cand[j] = v;
    }
    const double margin = y_pm * theta.dot(cand);
    if (margin < best_margin) {
      best_margin = margin;
      best = cand;
    }
  }
  return best;
}

/// Strict linear separability of 2-D data, decided exactly via convex-hull
/// disjointness (equivalent to the LP feasibility check at this scale).
namespace hull {

struct Pt {
  double x, y;
};

inline double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline std::vector<Pt> convex_hull(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Pt& a, const Pt& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Pt> h(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

/// Separating-axis test over both hulls' edges.
inline bool hulls_disjoint(const std::vector<Pt>& a, const std::vector<Pt>& b) {
  auto separated_by_edges_of = [](const std::vector<Pt>& poly, const std::vector<Pt>& other,
                                  const std::vector<Pt>& self) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Pt& p = poly[i];
      const Pt& q = poly[(i + 1) % n];
      const double nx = -(q.y - p.y), ny = q.x - p.x;  // edge normal
      double self_min = 1e300, self_max = -1e300, other_min = 1e300, other_max = -1e300;
      for (const Pt& s : self) {
        const double proj = nx * s.x + ny * s.y;
        self_min = std::min(self_min, proj);
        self_max = std::max(self_max, proj);
      }
      for (const Pt& o : other) {
        const double proj = nx * o.x + ny * o.y;
        other_min = std::min(other_min, proj);
        other_max = std::max(other_max, proj);
      }
      if (self_max < other_min || other_max < self_min) return true;
    }
    return false;
  };
  return separated_by_edges_of(a, b, a) || separated_by_edges_of(b, a, b);
}

}  // namespace hull

inline bool linearly_separable_2d(const LabeledSet& d) {
  std::vector<hull::Pt> c0, c1;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    hull::Pt p{d.features(i, 0), d.features(i, 1)};
    (d.labels[i] == 0 ? c0 : c1).push_back(p);
  }
  if (c0.empty() || c1.empty()) return true;
  return hull::hulls_disjoint(hull::convex_hull(c0), hull::convex_hull(c1));
}

/// erfc via composite Gauss-Legendre quadrature of the Gaussian density in
/// long double. Independent of the series/continued-fraction implementation.
inline long double erfc_quadrature(long double x) {
  if (x < 0) return 2.0L - erfc_quadrature(-x);
  // 40-panel 16-point Gauss-Legendre over [x, x+12]; the tail beyond is
  // below long-double resolution for the arguments we test
  static const long double nodes[8] = {
      0.0950125098376374401853193L, 0.2816035507792589132304605L,
      0.4580167776572273863424194L, 0.6178762444026437484466718L,
      0.7554044083550030338951012L, 0.8656312023878317438804679L,
      0.9445750230732325760779884L, 0.9894009349916499325961542L};
  static const long double weights[8] = {
      0.1894506104550684962853967L, 0.1826034150449235888667637L,
      0.1691565193950025381893121L, 0.1495959888165767320815017L,
      0.1246289712555338720524763L, 0.0951585116824927848099251L,
      0.0622535239386478928628438L, 0.0271524594117540948517806L};
  const long double inv_sqrt_pi = 0.564189583547756286948079451560772586L;
  const long double lo = x, hi = x + 12.0L;
  const int panels = 40;
  const long double w = (hi - lo) / panels;
  long double total = 0.0L;
  for (int p = 0; p < panels; ++p) {
    const long double a = lo + p * w, mid = a + w / 2, half = w / 2;
    long double acc = 0.0L;
    for (int i = 0; i < 8; ++i) {
      const long double t1 = mid + half * nodes[i];
      const long double t2 = mid - half * nodes[i];
      acc += weights[i] * (std::exp(-t1 * t1) + std::exp(-t2 * t2));
    }
    total += acc * half;
  }
  return 2.0L * inv_sqrt_pi * total;
}

}  // namespace trgame::oracle
