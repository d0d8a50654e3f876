#include "trgame/data.hpp"

#include <cmath>

#include "trgame/gaussian_sep.hpp"
#include "trgame/io.hpp"
#include "trgame/rng.hpp"

namespace trgame {

void DataSpec::validate() const {
  if (static_cast<bool>(idx_images) != static_cast<bool>(idx_labels))
    throw BadParams("DataSpec: idx images and labels must be set together");
  if (idx_images) return;
  switch (kind) {
    case SyntheticKind::Blobs2D:
      if (center0.size() != center1.size()) throw BadParams("DataSpec: blob center dims differ");
      if (noise < 0.0) throw BadParams("DataSpec: negative noise");
      break;
    case SyntheticKind::TwoGaussians:
      if (dim < 1) throw BadParams("DataSpec: dim must be positive");
      if (!(sigma > 0.0)) throw BadParams("DataSpec: sigma must be > 0");
      break;
    case SyntheticKind::Rings:
      if (!(radius0 >= 0.0) || !(radius1 >= 0.0) || noise < 0.0)
        throw BadParams("DataSpec: bad ring params");
      break;
  }
}

LabeledSet generate_synthetic(const DataSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw BadParams("generate_synthetic: n must be >= 1");
  RngStream rng(seed);

  if (spec.idx_images) {
    LabeledSet all = load_mnist_idx(*spec.idx_images, *spec.idx_labels);
    if (all.size() < n) throw BadParams("generate_synthetic: IDX file smaller than n");
    // seeded subsample without replacement
    LabeledSet out;
    out.features.resize(n, all.dim());
    out.labels.resize(n);
    std::vector<Eigen::Index> idx(all.size());
    for (Eigen::Index i = 0; i < all.size(); ++i) idx[i] = i;
    for (Eigen::Index i = all.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.bounded(static_cast<std::uint64_t>(i) + 1)]);
    for (int i = 0; i < n; ++i) {
      out.features.row(i) = all.features.row(idx[i]);
      out.labels[i] = all.labels[idx[i]];
    }
    return out;
  }

  switch (spec.kind) {
    case SyntheticKind::TwoGaussians: {
      GaussianInstance inst;
      inst.d = spec.dim;
      inst.sigma = spec.sigma;
      inst.n0 = std::pow(spec.sigma, 4) / spec.dim;
      RngStream mu_rng(spec.mu_seed);
      Vec u(spec.dim);
      for (int j = 0; j < spec.dim; ++j) u[j] = mu_rng.normal();
      u /= u.norm();
      inst.mu = std::sqrt(static_cast<double>(spec.dim)) * u;
      inst.m = inst.m_prime = 1;
      return sample_data(inst, n, rng);
    }
    case SyntheticKind::Blobs2D: {
      LabeledSet out;
      const Eigen::Index d = spec.center0.size();
      out.features.resize(n, d);
      out.labels.resize(n);
      for (int i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.bounded(2));
        const Vec& c = label == 0 ? spec.center0 : spec.center1;
        for (Eigen::Index j = 0; j < d; ++j)
          out.features(i, j) = c[j] + spec.noise * rng.normal();
        out.labels[i] = label;
      }
      return out;
    }
    case SyntheticKind::Rings: {
      LabeledSet out;
      out.features.resize(n, 2);
      out.labels.resize(n);
      for (int i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.bounded(2));
        const double r = (label == 0 ? spec.radius0 : spec.radius1) + spec.noise * rng.normal();
        const double ang = rng.uniform(0.0, 6.283185307179586476925286766559);
        out.features(i, 0) = r * std::cos(ang);
        out.features(i, 1) = r * std::sin(ang);
        out.labels[i] = label;
      }
      return out;
    }
  }
  throw BadParams("generate_synthetic: unknown kind");
}

}  // namespace trgame
