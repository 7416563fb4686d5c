#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sipgd/losses.hpp"
#include "sipgd/network.hpp"

namespace sipgd {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // L-inf radius in input units
  double eta = 2.0 / 255.0;      // step size (epsilon/4 by convention)
  int steps = 20;                // 20 for evaluation, 10 inside training
  int restarts = 1;
  LossKind loss = LossKind::CE;
  LossParams loss_params;
  uint64_t seed = 0;             // restart r draws from seed + r
  bool clip_init = true;         // clip the random start into [lo,hi]
  double input_lo = 0.0;
  double input_hi = 1.0;
  bool keep_trace = false;

  void validate() const;
};

struct AttackResult {
  Tensor adversarial;              // kept candidate per example (highest loss)
  std::vector<uint8_t> success;    // misclassified by any restart's candidate
  std::vector<double> final_loss;  // loss of the kept candidate
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;    // worst case across restarts
  // Per-restart per-example final losses, populated when cfg.keep_trace.
  std::vector<std::vector<double>> restart_loss_trace;
};

// Per-example ascent objective evaluated at a candidate batch; the returned
// tensor has shape {batch} and must be differentiable w.r.t. the candidate.
using AttackObjective = std::function<Tensor(const Network&, const Tensor& x_adv)>;

// Objective for the standard loss kinds (CE on logits, CW/DLR on softmax
// outputs, tempered-cosine CE). KL has no standalone attack form here.
AttackObjective objective_for(LossKind kind, const std::vector<int>& y, const LossParams& params);

// One signed-gradient ascent step followed by projection onto the
// epsilon-ball around x intersected with [lo,hi]. sign(0) = 0, so an exactly
// zero gradient leaves the candidate in place.
Tensor pgd_step(const Network& net, const Tensor& x_t, const Tensor& x,
                const std::vector<int>& y, const AttackConfig& cfg);

AttackResult run_attack(const Network& net, const Tensor& x, const std::vector<int>& y,
                        const AttackConfig& cfg);
AttackResult run_attack_with_objective(const Network& net, const Tensor& x,
                                       const std::vector<int>& y, const AttackConfig& cfg,
                                       const AttackObjective& objective);

// PGD driven by cross-entropy over s * cos(theta); invariant to rescaling of
// the softmax layer.
AttackResult si_pgd(const Network& net, const Tensor& x, const std::vector<int>& y,
                    AttackConfig cfg);

struct SpsaConfig {
  int samples = 128;        // perturbation pairs per gradient estimate; even, >= 2
  double delta = 0.001;     // finite-difference perturbation size
  double lr = 0.01;         // ascent step size
  int iters = 100;
  double epsilon = 8.0 / 255.0;
  uint64_t seed = 0;
  double input_lo = 0.0;
  double input_hi = 1.0;
};

// Gradient-free attack: symmetric Rademacher perturbations estimate the CW
// loss gradient from forward passes only; early-stops on misclassification.
AttackResult spsa_attack(const Network& net, const Tensor& x, const std::vector<int>& y,
                         const SpsaConfig& cfg);

// Throws unless every row of adv is within epsilon of x and inside [lo,hi].
void check_feasible(const Tensor& adv, const Tensor& x, double epsilon, double lo, double hi);

}  // namespace sipgd
