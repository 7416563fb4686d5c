#pragma once

#include <string>
#include <vector>

#include "sipgd/attacks.hpp"
#include "sipgd/checkpoint.hpp"
#include "sipgd/datasets.hpp"

namespace sipgd {

enum class DefenseMethod { AT, TRADES, ALP, MART };

DefenseMethod parse_defense_method(const std::string& name);
std::string defense_method_name(DefenseMethod m);

struct OptimizerConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 50;
  std::vector<int> milestones = {30, 40};  // lr /= 10 entering these epochs (1-based)
  int batch_size = 128;
};

struct DefenseConfig {
  DefenseMethod method = DefenseMethod::AT;
  bool si = false;
  double beta = 0.2;       // weight of the cosine-margin regularizer
  double lambda = 6.0;     // method weight (TRADES 6, ALP 3, MART 6)
  double alpha_alp = 0.5;  // ALP clean/adversarial mix
  double s = 15.0;
  double m = 0.2;
  AttackConfig inner_attack;  // steps = 10 inside training
  OptimizerConfig optimizer;
  uint64_t seed = 1;
  int probe_size = 256;  // held-out examples scored per epoch
  bool probe_enabled = true;

  DefenseConfig() {
    inner_attack.steps = 10;
    inner_attack.loss = LossKind::CE;
  }
  void validate() const;
};

// Loss decomposition of one objective evaluation. `total` stays on the graph
// for backward; the doubles are detached values for logging and tests.
struct ObjectiveTerms {
  Tensor total;
  double base = 0.0;     // CE / mixed CE / boosted CE part
  double kl = 0.0;       // unweighted KL part (TRADES, MART)
  double pairing = 0.0;  // unweighted ALP logit-pairing part
  double si_reg = 0.0;   // unweighted cosine-margin regularizer
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double loss_total = 0.0;
  double loss_base = 0.0;
  double loss_kl = 0.0;
  double loss_pairing = 0.0;
  double loss_si_reg = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  void write_csv(const std::string& path, const std::string& config_hash) const;
};

// Inner maximization: the method's adversarial objective run through the
// PGD loop of cfg.inner_attack. Returns the adversarial batch (constant).
Tensor inner_maximize(const Network& net, const Tensor& x, const std::vector<int>& y,
                      const DefenseConfig& cfg);

// Outer objective for one (method, si) row evaluated at a fixed adversarial
// batch.
ObjectiveTerms training_objective_terms(const Network& net, const Tensor& x,
                                        const std::vector<int>& y, const Tensor& x_adv,
                                        const DefenseConfig& cfg);
Tensor training_objective(const Network& net, const Tensor& x, const std::vector<int>& y,
                          const Tensor& x_adv, const DefenseConfig& cfg);

// Mean L2 norm of W^T (z - z_adv) over the batch.
Tensor alp_pairing_term(const Tensor& W, const Tensor& z, const Tensor& z_adv);

struct TrainOutput {
  Checkpoint checkpoint;
  TrainLog log;
  Network network;
};

// SGD with momentum and weight decay over shuffled minibatches; inner
// maximization regenerates adversaries every step. Deterministic per seed.
TrainOutput train(const Network& initial, const Dataset& data, const Dataset& probe,
                  const DefenseConfig& cfg, const std::string& config_hash = "");

}  // namespace sipgd
