// Timing comparison of the OpenMP kernels against the serial reference, with
// a bit-exactness check on every pair.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "trgame/attacks.hpp"
#include "trgame/data.hpp"
#include "trgame/game.hpp"
#include "trgame/gaussian_sep.hpp"
#include "trgame/parallel.hpp"

using namespace trgame;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(F&& f) {
  const auto t0 = Clock::now();
  f();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

bool sets_equal(const LabeledSet& a, const LabeledSet& b) {
  return a.labels == b.labels &&
         std::memcmp(a.features.data(), b.features.data(),
                     sizeof(double) * a.features.size()) == 0;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s serial %9.2f ms   omp %9.2f ms   speedup %5.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", par::max_threads());

  {
    DataSpec blobs;
    blobs.noise = 0.15;
    LabeledSet v = generate_synthetic(blobs, 2000, 42);
    ModelSpec arch{{2, 16, 16, 2}, 1};
    Model f = init_model(arch, RngStream(7));
    PerturbationBudget budget{.epsilon = 0.3, .step_size = 0.02, .steps = 200, .random_init = true};

    LabeledSet serial_out, parallel_out;
    double ts, tp;
    {
      par::SerialGuard guard;
      ts = time_ms([&] { serial_out = pgd_maximize({f}, CompositeLoss::Single, v, budget, 1); });
    }
    tp = time_ms([&] { parallel_out = pgd_maximize({f}, CompositeLoss::Single, v, budget, 1); });
    report("pgd_maximize (2000 pts)", ts, tp, sets_equal(serial_out, parallel_out));
  }

  {
    GaussianInstance inst = GaussianInstance::theorem_regime(1024, 0.1, 1.0, 0.5, 4.0, 3);
    SeparationReport rs, rp;
    double ts, tp;
    {
      par::SerialGuard guard;
      ts = time_ms([&] { rs = run_separation(inst, 400, 5); });
    }
    tp = time_ms([&] { rp = run_separation(inst, 400, 5); });
    report("run_separation (400 trials)", ts, tp,
           rs.inductive_errors == rp.inductive_errors &&
               rs.transductive_errors == rp.transductive_errors);
  }

  {
    DataSpec blobs;
    blobs.noise = 0.15;
    LabeledSet d = generate_synthetic(blobs, 512, 11);
    ModelSpec arch{{2, 32, 2}, 1};
    TrainConfig cfg{.epochs = 60, .batch_size = 64, .learning_rate = 0.1, .seed = 13};
    Model ms, mp;
    double ts, tp;
    {
      par::SerialGuard guard;
      ts = time_ms([&] { ms = train_standard(d, cfg, arch); });
    }
    tp = time_ms([&] { mp = train_standard(d, cfg, arch); });
    report("train_standard (512x60)", ts, tp, ms.equals(mp));
  }

  return 0;
}
