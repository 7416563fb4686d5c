#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sipgd/attacks.hpp"
#include "sipgd/defenses.hpp"
#include "sipgd/report.hpp"

namespace sipgd {

struct NamedAttack {
  std::string name;
  AttackConfig cfg;
  bool use_spsa = false;
  SpsaConfig spsa;
};

// One report row per attack entry: clean accuracy, robust accuracy, mean
// final loss. An empty attack list reports clean accuracy alone. Wall time
// goes to `timing` (when given), never into the report, so outputs stay
// byte-reproducible.
ExperimentReport evaluate_suite(const Network& net, const Dataset& data,
                                const std::vector<NamedAttack>& attacks,
                                std::ostream* timing = nullptr);

struct SweepScaleOptions {
  std::vector<double> factors = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  double epsilon = 8.0 / 255.0;
  double eta = 0.0;  // 0 -> epsilon / 4
  int steps = 20;
  int restarts = 1;
  uint64_t seed = 0;
  double s = 15.0;
};

// Robust accuracy of PGD and SI-PGD against the classifier with its softmax
// layer rescaled by each factor. Clean decisions must not change across
// factors; a violation throws.
ExperimentReport sweep_scale(const Network& net, const Dataset& data,
                             const SweepScaleOptions& opt);

struct AblateOptions {
  std::vector<double> s_values = {10, 15, 20, 30, 40, 50, 60};
  std::vector<double> m_values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<double> beta_values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  bool cross_product = false;  // default: three axis sweeps around the base point
  std::string arch = "mlp 2 128 128 2";
  DefenseConfig base;  // defaults to TRADES-SI at s=15, m=0.2, beta=0.2
  double eval_epsilon = 8.0 / 255.0;
  int eval_steps = 20;
  uint64_t eval_seed = 0;

  AblateOptions() {
    base.method = DefenseMethod::TRADES;
    base.si = true;
  }
};

// Trains one model per grid point and reports natural / PGD / PGDCW / SI-PGD
// accuracy columns.
ExperimentReport ablate(const Dataset& train_data, const Dataset& test_data,
                        const AblateOptions& opt, std::ostream* progress = nullptr);

struct SurfaceOptions {
  enum class Mode { Example, Weight };
  Mode mode = Mode::Example;
  int example_index = 0;  // example mode
  int batch_limit = 128;  // weight mode: examples behind the adversarial loss
  double halfwidth = 8.0 / 255.0;
  int resolution = 21;  // >= 3
  double epsilon = 8.0 / 255.0;
  int attack_steps = 10;
  uint64_t seed = 0;
};

// Example mode: loss over x + d1*v + d2*r with v the normalized PGD
// perturbation and r a seeded random direction. Weight mode: adversarial
// loss along W + delta*d for a random direction d.
ExperimentReport surface(const Network& net, const Dataset& data, const SurfaceOptions& opt);

struct HistogramOptions {
  int bins = 40;
  AttackConfig attack;  // default: PGD-10 with CE

  HistogramOptions() { attack.steps = 10; }
};

// Binned distribution of cos(theta_y) on adversarial examples.
ExperimentReport histogram(const Network& net, const Dataset& data, const HistogramOptions& opt);

}  // namespace sipgd
