#include "trgame/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trgame/attacks.hpp"
#include "trgame/parallel.hpp"

namespace trgame {

void TrainConfig::validate() const {
  if (epochs < 0) throw BadParams("TrainConfig: negative epochs");
  if (batch_size < 1) throw BadParams("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw BadParams("TrainConfig: learning_rate must be > 0");
  if (weight_decay < 0.0) throw BadParams("TrainConfig: negative weight_decay");
  if (early_stop_patience && *early_stop_patience < 1)
    throw BadParams("TrainConfig: patience must be >= 1");
}

double matching_weight(AlphaSchedule schedule, double alpha_max, double progress) {
  if (schedule == AlphaSchedule::Constant) return alpha_max;
  return alpha_max * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

namespace {

struct ParamGrads {
  std::vector<Mat> w;
  std::vector<Vec> b;

  static ParamGrads zeros_like(const Model& f) {
    ParamGrads g;
    for (int l = 0; l < f.depth(); ++l) {
      g.w.push_back(Mat::Zero(f.weights[l].rows(), f.weights[l].cols()));
      g.b.push_back(Vec::Zero(f.biases[l].size()));
    }
    return g;
  }

  void add(const ParamGrads& other, double scale = 1.0) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      w[l] += scale * other.w[l];
      b[l] += scale * other.b[l];
    }
  }

  void scale(double s) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      w[l] *= s;
      b[l] *= s;
    }
  }
};

struct OptimizerState {
  ParamGrads m, v;
  long step = 0;

  static OptimizerState for_model(const Model& f) {
    OptimizerState s;
    s.m = ParamGrads::zeros_like(f);
    s.v = ParamGrads::zeros_like(f);
    return s;
  }
};

void apply_update(Model& f, OptimizerState& st, const ParamGrads& g, const TrainConfig& cfg) {
  if (cfg.optimizer == Optimizer::Sgd) {
    for (int l = 0; l < f.depth(); ++l) {
      f.weights[l] -= cfg.learning_rate * (g.w[l] + cfg.weight_decay * f.weights[l]);
      f.biases[l] -= cfg.learning_rate * g.b[l];
    }
    return;
  }
  ++st.step;
  const double b1 = cfg.adam.beta1, b2 = cfg.adam.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (int l = 0; l < f.depth(); ++l) {
    Mat gw = g.w[l] + cfg.weight_decay * f.weights[l];
    st.m.w[l] = b1 * st.m.w[l] + (1.0 - b1) * gw;
    st.v.w[l] = b2 * st.v.w[l] + (1.0 - b2) * gw.cwiseProduct(gw);
    f.weights[l] -=
        cfg.learning_rate *
        (st.m.w[l] / bc1)
            .cwiseQuotient(((st.v.w[l] / bc2).cwiseSqrt().array() + cfg.adam.eps).matrix());
    st.m.b[l] = b1 * st.m.b[l] + (1.0 - b1) * g.b[l];
    st.v.b[l] = b2 * st.v.b[l] + (1.0 - b2) * g.b[l].cwiseProduct(g.b[l]);
    f.biases[l] -=
        cfg.learning_rate *
        (st.m.b[l] / bc1)
            .cwiseQuotient(((st.v.b[l] / bc2).cwiseSqrt().array() + cfg.adam.eps).matrix());
  }
}

/// Mean cross-entropy gradient over the rows of `batch`. Per-example
/// gradients are computed in parallel and reduced in index order.
double batch_gradients(const Model& f, const Mat& x, const std::vector<int>& y, ParamGrads& out) {
  const Eigen::Index n = x.rows();
  std::vector<GradientBundle> slots(n);
  par::for_each_index(n, [&](std::ptrdiff_t i) {
    slots[i] = loss_gradients(f, x.row(i).transpose(), y[i], LossKind::CrossEntropy,
                              /*want_input=*/false, /*want_params=*/true);
  });
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += slots[i].loss;
    for (int l = 0; l < f.depth(); ++l) {
      out.w[l] += (*slots[i].weight_grads)[l];
      out.b[l] += (*slots[i].bias_grads)[l];
    }
  }
  out.scale(1.0 / static_cast<double>(n));
  return loss / static_cast<double>(n);
}

/// Backprop a cotangent at the representation cut down to parameter
/// gradients of the phi layers.
void phi_backprop(const Model& f, const Vec& x, const Vec& cotangent, ParamGrads& out) {
  const int cut = f.representation_cut;
  if (cut == 0) return;  // phi is the identity, no parameters involved
  std::vector<Vec> acts(cut + 1);
  std::vector<Vec> pre(cut);
  acts[0] = x;
  for (int l = 0; l < cut; ++l) {
    pre[l] = f.weights[l] * acts[l] + f.biases[l];
    acts[l + 1] = (l + 1 < f.depth()) ? pre[l].cwiseMax(0.0) : pre[l];
  }
  Vec delta = cotangent;
  // the cut layer's activation was ReLU'd unless it is the output layer
  if (cut < f.depth()) {
    for (Eigen::Index j = 0; j < delta.size(); ++j)
      if (pre[cut - 1][j] <= 0.0) delta[j] = 0.0;
  }
  for (int l = cut - 1; l >= 0; --l) {
    out.w[l] += delta * acts[l].transpose();
    out.b[l] += delta;
    if (l > 0) {
      Vec da = f.weights[l].transpose() * delta;
      for (Eigen::Index j = 0; j < da.size(); ++j)
        if (pre[l - 1][j] <= 0.0) da[j] = 0.0;
      delta = std::move(da);
    }
  }
}

Mat phi_matrix(const Model& f, const Mat& x) {
  Vec probe = representation(f, x.row(0).transpose());
  Mat out(x.rows(), probe.size());
  out.row(0) = probe.transpose();
  par::for_each_index(x.rows() - 1, [&](std::ptrdiff_t i) {
    out.row(i + 1) = representation(f, x.row(i + 1).transpose()).transpose();
  });
  return out;
}

/// Gradient of || mean phi(xa) - mean phi(xb) ||^2 w.r.t. model parameters.
/// Returns the current distance value.
double mean_feature_match_gradients(const Model& f, const Mat& xa, const Mat& xb,
                                    ParamGrads& out) {
  Mat pa = phi_matrix(f, xa);
  Mat pb = phi_matrix(f, xb);
  Vec diff = pa.colwise().mean().transpose() - pb.colwise().mean().transpose();
  const double dist = diff.squaredNorm();
  if (f.representation_cut == 0) return dist;  // constant in the parameters
  Vec cot_a = 2.0 * diff / static_cast<double>(xa.rows());
  Vec cot_b = -2.0 * diff / static_cast<double>(xb.rows());
  for (Eigen::Index i = 0; i < xa.rows(); ++i) phi_backprop(f, xa.row(i).transpose(), cot_a, out);
  for (Eigen::Index i = 0; i < xb.rows(); ++i) phi_backprop(f, xb.row(i).transpose(), cot_b, out);
  return dist;
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, RngStream& rng) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.bounded(static_cast<std::uint64_t>(i) + 1)]);
  return idx;
}

struct BatchView {
  Mat x;
  std::vector<int> y;
};

BatchView gather(const LabeledSet& d, const std::vector<Eigen::Index>& order, Eigen::Index begin,
                 Eigen::Index end) {
  BatchView b;
  b.x.resize(end - begin, d.dim());
  b.y.resize(end - begin);
  for (Eigen::Index i = begin; i < end; ++i) {
    b.x.row(i - begin) = d.features.row(order[i]);
    b.y[i - begin] = d.labels[order[i]];
  }
  return b;
}

void check_finite_loss(double loss) {
  // a cross-entropy this large only happens when the step size blew up
  if (!std::isfinite(loss) || loss > 1e12) throw NumericError("training loss diverged");
}

/// Shared trainer skeleton. perturb (optional) maps a batch to its
/// adversarial replacement; extra (optional) adds penalty gradients and
/// returns the penalty value.
template <class Perturb, class Extra>
Model run_training(Model f, const LabeledSet& d, const TrainConfig& cfg, Perturb&& perturb,
                   Extra&& extra) {
  cfg.validate();
  if (d.size() == 0) throw EmptySetError("train: empty training set");
  if (d.dim() != f.input_dim()) throw DimMismatch("train: data dim != model input");
  RngStream root(cfg.seed);
  RngStream shuffle_rng = root.child(rng_role::kShuffle);
  OptimizerState st = OptimizerState::for_model(f);

  const Eigen::Index n = d.size();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  const long batches_per_epoch = (n + bs - 1) / bs;
  const long total_steps = std::max(1L, static_cast<long>(cfg.epochs) * batches_per_epoch);

  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled_indices(n, shuffle_rng);
    double epoch_loss = 0.0;
    for (Eigen::Index b = 0; b < n; b += bs) {
      const Eigen::Index hi = std::min(b + bs, n);
      BatchView batch = gather(d, order, b, hi);
      perturb(f, batch, epoch, static_cast<long>(b / bs));
      ParamGrads g = ParamGrads::zeros_like(f);
      double loss = batch_gradients(f, batch.x, batch.y, g);
      const double progress =
          total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 1.0;
      loss += extra(f, g, progress, epoch);
      check_finite_loss(loss);
      apply_update(f, st, g, cfg);
      epoch_loss += loss * static_cast<double>(hi - b);
      ++step;
    }
    epoch_loss /= static_cast<double>(n);
    if (cfg.early_stop_patience) {
      if (epoch_loss < best_loss - 1e-12) {
        best_loss = epoch_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= *cfg.early_stop_patience) {
        break;
      }
    }
  }
  f.validate();
  return f;
}

const auto kNoPerturb = [](const Model&, BatchView&, int, long) {};
const auto kNoExtra = [](const Model&, ParamGrads&, double, int) { return 0.0; };

}  // namespace

Model train_standard(const LabeledSet& d, const TrainConfig& cfg, const ModelSpec& arch) {
  d.validate();
  Model f = init_model(arch, RngStream(cfg.seed).child(rng_role::kInit));
  return run_training(std::move(f), d, cfg, kNoPerturb, kNoExtra);
}

Model train_adversarial(const LabeledSet& d, const TrainConfig& cfg,
                        const PerturbationBudget& budget, const ModelSpec& arch) {
  d.validate();
  budget.validate();
  Model f = init_model(arch, RngStream(cfg.seed).child(rng_role::kInit));
  RngStream pgd_root = RngStream(cfg.seed).child(rng_role::kPgd);
  auto perturb = [&](const Model& cur, BatchView& batch, int epoch, long batch_idx) {
    LabeledSet v{batch.x, batch.y};
    std::uint64_t s = pgd_root.child(static_cast<std::uint64_t>(epoch))
                          .child(static_cast<std::uint64_t>(batch_idx))
                          .seed();
    batch.x = pgd_maximize({cur}, CompositeLoss::Single, v, budget, s).features;
  };
  return run_training(std::move(f), d, cfg, perturb, kNoExtra);
}

Model adapt_identity(const Model& f, const LabeledSet&, const UnlabeledSet&) { return f; }

double feature_distance(const Model& f, const UnlabeledSet& a, const UnlabeledSet& b,
                        Matcher matcher, const TrainConfig& disc_cfg) {
  if (a.size() == 0 || b.size() == 0) throw EmptySetError("feature_distance: empty set");
  if (a.dim() != f.input_dim() || b.dim() != f.input_dim())
    throw DimMismatch("feature_distance: dim mismatch");
  Mat pa = phi_matrix(f, a.features);
  Mat pb = phi_matrix(f, b.features);
  if (matcher == Matcher::MeanFeature) {
    Vec diff = pa.colwise().mean().transpose() - pb.colwise().mean().transpose();
    return diff.squaredNorm();
  }
  // logistic discriminator on phi(A) (class 0) vs phi(B) (class 1)
  Mat x(pa.rows() + pb.rows(), pa.cols());
  x.topRows(pa.rows()) = pa;
  x.bottomRows(pb.rows()) = pb;
  std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
  std::fill(y.begin() + pa.rows(), y.end(), 1);
  LabeledSet mix{std::move(x), std::move(y)};
  ModelSpec spec{{static_cast<int>(pa.cols()), 2}, 0};
  Model h = train_standard(mix, disc_cfg, spec);
  const double loss = empirical_loss(h, mix, LossKind::CrossEntropy);
  return std::max(0.0, std::numbers::ln2 - loss);
}

namespace {

/// One logistic-discriminator step on phi features; returns the model-side
/// matching gradient (gradient reversal through phi) and the distance proxy.
struct DannState {
  Model head;  // logistic head on phi features
  OptimizerState opt;
};

double dann_match_gradients(const Model& f, DannState& dann, const TrainConfig& cfg,
                            const Mat& xa, const Mat& xb, ParamGrads& out) {
  Mat pa = phi_matrix(f, xa);
  Mat pb = phi_matrix(f, xb);
  Mat x(pa.rows() + pb.rows(), pa.cols());
  x.topRows(pa.rows()) = pa;
  x.bottomRows(pb.rows()) = pb;
  std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
  std::fill(y.begin() + pa.rows(), y.end(), 1);

  // update the head to keep discriminating
  ParamGrads hg = ParamGrads::zeros_like(dann.head);
  double head_loss = batch_gradients(dann.head, x, y, hg);
  apply_update(dann.head, dann.opt, hg, cfg);

  // reversed gradient: the feature map ascends the discriminator loss
  if (f.representation_cut > 0) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      GradientBundle gb = loss_gradients(dann.head, x.row(i).transpose(), y[i],
                                         LossKind::CrossEntropy, true, false);
      Vec cot = -(*gb.input_grad) / static_cast<double>(x.rows());
      const Mat& src = i < pa.rows() ? xa : xb;
      const Eigen::Index row = i < pa.rows() ? i : i - pa.rows();
      phi_backprop(f, src.row(row).transpose(), cot, out);
    }
  }
  return std::max(0.0, std::numbers::ln2 - head_loss);
}

Mat cycle_rows(const Mat& src, Eigen::Index want, Eigen::Index offset) {
  Mat out(want, src.cols());
  for (Eigen::Index i = 0; i < want; ++i) out.row(i) = src.row((offset + i) % src.rows());
  return out;
}

}  // namespace

Model adapt_retrain_matching(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                             const TrainConfig& cfg, Matcher matcher, AlphaSchedule schedule,
                             double alpha_max) {
  d.validate();
  u_prime.validate();
  if (d.size() == 0 || u_prime.size() == 0)
    throw EmptySetError("adapt_retrain_matching: empty input");
  Model fresh = init_model(f.spec(), RngStream(cfg.seed).child(rng_role::kInit));

  DannState dann;
  TrainConfig head_cfg = cfg;
  head_cfg.weight_decay = 0.0;
  if (matcher == Matcher::Discriminator) {
    Vec probe = representation(fresh, d.features.row(0).transpose());
    ModelSpec head_spec{{static_cast<int>(probe.size()), 2}, 0};
    dann.head = init_model(head_spec, RngStream(cfg.seed).child(rng_role::kInit).child(1));
    dann.opt = OptimizerState::for_model(dann.head);
  }

  long batch_counter = 0;
  auto extra = [&](const Model& cur, ParamGrads& g, double progress, int) {
    const double alpha = matching_weight(schedule, alpha_max, progress);
    const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, u_prime.size());
    Mat ub = cycle_rows(u_prime.features, bs, batch_counter * bs);
    Mat db = cycle_rows(d.features, std::min<Eigen::Index>(cfg.batch_size, d.size()),
                        batch_counter * bs);
    ++batch_counter;
    if (alpha == 0.0) return 0.0;
    ParamGrads mg = ParamGrads::zeros_like(cur);
    double dist;
    if (matcher == Matcher::MeanFeature) {
      dist = mean_feature_match_gradients(cur, db, ub, mg);
    } else {
      dist = dann_match_gradients(cur, dann, head_cfg, db, ub, mg);
    }
    g.add(mg, alpha);
    return alpha * dist;
  };
  return run_training(std::move(fresh), d, cfg, kNoPerturb, extra);
}

Model adapt_atrm(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                 const TrainConfig& cfg, const AtrmConfig& acfg) {
  d.validate();
  u_prime.validate();
  if (d.size() == 0 || u_prime.size() == 0) throw EmptySetError("adapt_atrm: empty input");
  acfg.inner_budget.validate();

  RngStream root(cfg.seed);
  RngStream pgd_root = root.child(rng_role::kPgd);

  // warm start from the deployed model; D' is refreshed against the current
  // model at every epoch
  Model cur = f;
  LabeledSet d_adv;
  RngStream shuffle_rng = root.child(rng_role::kShuffle);
  OptimizerState st = OptimizerState::for_model(cur);
  const Eigen::Index n = d.size();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  const long batches_per_epoch = (n + bs - 1) / bs;
  const long total_steps = std::max(1L, static_cast<long>(cfg.epochs) * batches_per_epoch);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    d_adv = pgd_maximize({cur}, CompositeLoss::Single, d, acfg.inner_budget,
                         pgd_root.child(static_cast<std::uint64_t>(epoch)).seed());
    auto order = shuffled_indices(n, shuffle_rng);
    for (Eigen::Index b = 0; b < n; b += bs) {
      const Eigen::Index hi = std::min(b + bs, n);
      BatchView batch = gather(d_adv, order, b, hi);
      ParamGrads g = ParamGrads::zeros_like(cur);
      double loss = batch_gradients(cur, batch.x, batch.y, g);
      const double progress =
          total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 1.0;
      const double alpha = matching_weight(acfg.schedule, acfg.alpha_max, progress);
      if (alpha != 0.0) {
        const Eigen::Index ubs = std::min<Eigen::Index>(cfg.batch_size, u_prime.size());
        Mat ub = cycle_rows(u_prime.features, ubs, step * ubs);
        ParamGrads mg = ParamGrads::zeros_like(cur);
        loss += alpha * mean_feature_match_gradients(cur, batch.x, ub, mg);
        g.add(mg, alpha);
      }
      check_finite_loss(loss);
      apply_update(cur, st, g, cfg);
      ++step;
    }
  }
  cur.validate();
  return cur;
}

std::vector<Eigen::Index> rmc_neighbors(const Model& f, const LabeledSet& pool, const Vec& x_hat,
                                        int k) {
  if (pool.size() == 0) throw EmptySetError("rmc_neighbors: empty pool");
  if (k < 1 || k > pool.size()) throw BadParams("rmc_neighbors: k out of range");
  Vec target = representation(f, x_hat);
  std::vector<double> dist(static_cast<std::size_t>(pool.size()));
  par::for_each_index(pool.size(), [&](std::ptrdiff_t i) {
    dist[i] = (representation(f, pool.features.row(i).transpose()) - target).squaredNorm();
  });
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pool.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return dist[a] < dist[b]; });
  idx.resize(k);
  return idx;
}

Model adapt_rmc(const Model& f, const RmcConfig& rcfg, const Vec& x_hat) {
  if (rcfg.adapt_config.epochs == 0) return f;
  auto nn = rmc_neighbors(f, rcfg.augmented_pool, x_hat, rcfg.k_neighbors);

  // last 10% of the neighbor list (ascending distance order) is held out for
  // early stopping; too-small neighbor sets train without one
  const Eigen::Index k = static_cast<Eigen::Index>(nn.size());
  const Eigen::Index n_val = k / 10;
  const Eigen::Index n_train = k - n_val;
  LabeledSet train_set, val_set;
  train_set.features.resize(n_train, rcfg.augmented_pool.dim());
  val_set.features.resize(n_val, rcfg.augmented_pool.dim());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (i < n_train) {
      train_set.features.row(i) = rcfg.augmented_pool.features.row(nn[i]);
      train_set.labels.push_back(rcfg.augmented_pool.labels[nn[i]]);
    } else {
      val_set.features.row(i - n_train) = rcfg.augmented_pool.features.row(nn[i]);
      val_set.labels.push_back(rcfg.augmented_pool.labels[nn[i]]);
    }
  }

  const TrainConfig& cfg = rcfg.adapt_config;
  const int patience = cfg.early_stop_patience.value_or(5);
  RngStream shuffle_rng = RngStream(cfg.seed).child(rng_role::kShuffle);
  Model cur = f;
  OptimizerState st = OptimizerState::for_model(cur);
  Model best = cur;
  double best_val = n_val > 0 ? empirical_loss(cur, val_set, LossKind::CrossEntropy)
                              : std::numeric_limits<double>::infinity();
  int stale = 0;
  const Eigen::Index n = train_set.size();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled_indices(n, shuffle_rng);
    for (Eigen::Index b = 0; b < n; b += bs) {
      BatchView batch = gather(train_set, order, b, std::min(b + bs, n));
      ParamGrads g = ParamGrads::zeros_like(cur);
      double loss = batch_gradients(cur, batch.x, batch.y, g);
      check_finite_loss(loss);
      apply_update(cur, st, g, cfg);
    }
    if (n_val > 0) {
      const double val = empirical_loss(cur, val_set, LossKind::CrossEntropy);
      if (val < best_val - 1e-12) {
        best_val = val;
        best = cur;
        stale = 0;
      } else if (++stale >= patience) {
        return best;
      }
    }
  }
  return n_val > 0 ? best : cur;
}

Model RetrainMatchingAdaptor::adapt(const Model& f, const LabeledSet& d,
                                    const UnlabeledSet& u_prime, RngStream rng) const {
  TrainConfig cfg = cfg_;
  cfg.seed = rng.seed();
  return adapt_retrain_matching(f, d, u_prime, cfg, matcher_, schedule_, alpha_max_);
}

Model AtrmAdaptor::adapt(const Model& f, const LabeledSet& d, const UnlabeledSet& u_prime,
                         RngStream rng) const {
  TrainConfig cfg = cfg_;
  cfg.seed = rng.seed();
  return adapt_atrm(f, d, u_prime, cfg, acfg_);
}

Model RmcAdaptor::adapt(const Model& f, const LabeledSet&, const UnlabeledSet& u_prime,
                        RngStream rng) const {
  if (u_prime.size() != 1) throw BadParams("rmc: adapts one test point at a time");
  RmcConfig rcfg = rcfg_;
  rcfg.adapt_config.seed = rng.seed();
  return adapt_rmc(f, rcfg, u_prime.features.row(0).transpose());
}

}  // namespace trgame
