#include "sipgd/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "sipgd/report.hpp"
#include "sipgd/rng.hpp"

namespace sipgd {

DefenseMethod parse_defense_method(const std::string& name) {
  if (name == "at") return DefenseMethod::AT;
  if (name == "trades") return DefenseMethod::TRADES;
  if (name == "alp") return DefenseMethod::ALP;
  if (name == "mart") return DefenseMethod::MART;
  throw std::invalid_argument("unknown defense method '" + name + "'");
}

std::string defense_method_name(DefenseMethod m) {
  switch (m) {
    case DefenseMethod::AT: return "at";
    case DefenseMethod::TRADES: return "trades";
    case DefenseMethod::ALP: return "alp";
    case DefenseMethod::MART: return "mart";
  }
  return "?";
}

void DefenseConfig::validate() const {
  if (beta < 0.0) throw std::invalid_argument("defense: beta must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("defense: lambda must be >= 0");
  if (alpha_alp < 0.0 || alpha_alp > 1.0) throw std::invalid_argument("defense: alpha must be in [0,1]");
  if (!(s > 0.0)) throw std::invalid_argument("defense: s must be positive");
  if (m < 0.0) throw std::invalid_argument("defense: m must be >= 0");
  if (optimizer.epochs < 0) throw std::invalid_argument("defense: epochs must be >= 0");
  if (optimizer.batch_size < 1) throw std::invalid_argument("defense: batch size must be >= 1");
  inner_attack.validate();
}

Tensor inner_maximize(const Network& net, const Tensor& x, const std::vector<int>& y,
                      const DefenseConfig& cfg) {
  AttackConfig atk = cfg.inner_attack;
  atk.loss_params.s = cfg.s;
  AttackObjective objective;
  if (cfg.si) {
    // All SI rows ascend cross-entropy over the tempered cosine logits.
    atk.loss = LossKind::SI_CE;
    objective = objective_for(atk.loss, y, atk.loss_params);
  } else if (cfg.method == DefenseMethod::TRADES) {
    // Ascend KL(f(x) || f(x')) with the clean distribution held constant.
    Tensor p_clean;
    {
      NoGradGuard ng;
      p_clean = softmax(net.forward(x).logits);
    }
    objective = [p_clean](const Network& n, const Tensor& xa) {
      return kl_div_each(p_clean, softmax(n.forward(xa).logits));
    };
  } else {
    atk.loss = LossKind::CE;
    objective = objective_for(atk.loss, y, atk.loss_params);
  }
  return run_attack_with_objective(net, x, y, atk, objective).adversarial;
}

Tensor alp_pairing_term(const Tensor& W, const Tensor& z, const Tensor& z_adv) {
  if (z.shape() != z_adv.shape()) throw std::invalid_argument("alp_pairing_term: shape mismatch");
  Tensor diff = matmul(z - z_adv, W);         // [n,K], bias cancels
  Tensor norms = sqrt(row_sum(diff * diff));  // [n,1]
  return mean(norms);
}

ObjectiveTerms training_objective_terms(const Network& net, const Tensor& x,
                                        const std::vector<int>& y, const Tensor& x_adv,
                                        const DefenseConfig& cfg) {
  if (x.shape() != x_adv.shape()) {
    throw std::invalid_argument("training_objective: clean and adversarial batch shapes differ");
  }
  ObjectiveTerms terms;

  ForwardResult adv = net.forward(x_adv);
  Tensor total;

  switch (cfg.method) {
    case DefenseMethod::AT: {
      Tensor base = ce_logits(adv.logits, y);
      terms.base = base.item();
      total = base;
      break;
    }
    case DefenseMethod::TRADES: {
      ForwardResult clean = net.forward(x);
      Tensor base = ce_logits(clean.logits, y);
      Tensor kl = kl_div(softmax(clean.logits), softmax(adv.logits));
      terms.base = base.item();
      terms.kl = kl.item();
      total = base + kl * cfg.lambda;
      break;
    }
    case DefenseMethod::ALP: {
      ForwardResult clean = net.forward(x);
      Tensor base = ce_logits(clean.logits, y) * cfg.alpha_alp +
                    ce_logits(adv.logits, y) * (1.0 - cfg.alpha_alp);
      Tensor pairing = alp_pairing_term(net.softmax_weight(), clean.z, adv.z);
      terms.base = base.item();
      terms.pairing = pairing.item();
      total = base + pairing * cfg.lambda;
      break;
    }
    case DefenseMethod::MART: {
      ForwardResult clean = net.forward(x);
      Tensor p_clean = softmax(clean.logits);
      Tensor base = bce_mart(softmax(adv.logits), y);
      // Per-example KL weighted by (1 - p_y) on the clean input; the weight
      // is treated as a constant.
      Tensor weight = (1.0 - gather_cols(p_clean, y)).detach();
      Tensor kl_each = kl_div_each(p_clean, softmax(adv.logits));
      Tensor kl_weighted = mean(kl_each * weight);
      terms.base = base.item();
      terms.kl = kl_weighted.item();
      total = base + kl_weighted * cfg.lambda;
      break;
    }
  }

  if (cfg.si) {
    Tensor reg = si_ce_margin(cos_theta(adv.z, net.softmax_weight()), y, cfg.s, cfg.m);
    terms.si_reg = reg.item();
    total = total + reg * cfg.beta;
  }

  terms.total = total;
  return terms;
}

Tensor training_objective(const Network& net, const Tensor& x, const std::vector<int>& y,
                          const Tensor& x_adv, const DefenseConfig& cfg) {
  return training_objective_terms(net, x, y, x_adv, cfg).total;
}

void TrainLog::write_csv(const std::string& path, const std::string& config_hash) const {
  ExperimentReport report;
  report.metadata.emplace_back("config_hash", config_hash);
  report.columns = {"epoch",      "lr",        "clean_acc",    "robust_acc", "loss_total",
                    "loss_base",  "loss_kl",   "loss_pairing", "loss_si_reg"};
  for (const auto& e : epochs) {
    report.add_row({std::to_string(e.epoch), fmt_double(e.lr), fmt_double(e.clean_accuracy),
                    fmt_double(e.robust_accuracy), fmt_double(e.loss_total),
                    fmt_double(e.loss_base), fmt_double(e.loss_kl), fmt_double(e.loss_pairing),
                    fmt_double(e.loss_si_reg)});
  }
  report.write_csv(path);
}

TrainOutput train(const Network& initial, const Dataset& data, const Dataset& probe,
                  const DefenseConfig& cfg, const std::string& config_hash) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");

  Network net = initial;
  std::vector<Tensor> params = net.parameters();
  std::vector<std::vector<double>> velocity;
  velocity.reserve(params.size());
  for (const auto& p : params) velocity.emplace_back(static_cast<size_t>(p.size()), 0.0);

  Rng shuffle_rng(cfg.seed);
  uint64_t attack_counter = 0;
  const auto& opt = cfg.optimizer;

  TrainOutput out;
  int n = data.size();
  int64_t stride = data.inputs.size() / n;
  Shape batch_shape_proto = data.inputs.shape();

  auto gather_batch = [&](const std::vector<int>& order, int begin, int count) {
    std::vector<double> xs(static_cast<size_t>(count) * stride);
    std::vector<int> ys(static_cast<size_t>(count));
    const auto& src = data.inputs.data();
    for (int i = 0; i < count; ++i) {
      int idx = order[static_cast<size_t>(begin + i)];
      std::copy(src.begin() + idx * stride, src.begin() + (idx + 1) * stride,
                xs.begin() + static_cast<int64_t>(i) * stride);
      ys[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(idx)];
    }
    Shape bs = batch_shape_proto;
    bs[0] = count;
    return std::make_pair(Tensor::from(bs, std::move(xs)), std::move(ys));
  };

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    int drops = 0;
    for (int m : opt.milestones) {
      if (epoch >= m) ++drops;
    }
    double lr = opt.lr * std::pow(0.1, drops);

    shuffle_rng.shuffle(order);

    double sum_total = 0, sum_base = 0, sum_kl = 0, sum_pairing = 0, sum_si = 0;
    int batches = 0;

    for (int begin = 0; begin < n; begin += opt.batch_size) {
      int count = std::min(opt.batch_size, n - begin);
      auto [bx, by] = gather_batch(order, begin, count);

      DefenseConfig step_cfg = cfg;
      step_cfg.inner_attack.seed = cfg.inner_attack.seed + (++attack_counter);
      Tensor x_adv = inner_maximize(net, bx, by, step_cfg);

      // Re-bind parameters as fresh leaves for this step's graph.
      std::vector<Tensor> vars;
      vars.reserve(params.size());
      for (const auto& p : params) vars.push_back(p.as_variable());
      Network train_net = net.with_parameters(vars);

      ObjectiveTerms terms = training_objective_terms(train_net, bx, by, x_adv, cfg);
      if (!std::isfinite(terms.total.item())) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      backward(terms.total);

      for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& value = vars[pi].data();
        const auto& grad = vars[pi].grad();
        auto& vel = velocity[pi];
        std::vector<double> updated(value.size());
        for (size_t j = 0; j < value.size(); ++j) {
          double g = grad[j] + opt.weight_decay * value[j];
          vel[j] = opt.momentum * vel[j] + g;
          updated[j] = value[j] - lr * vel[j];
        }
        params[pi] = Tensor::from(vars[pi].shape(), std::move(updated));
      }
      net = net.with_parameters(params);

      sum_total += terms.total.item();
      sum_base += terms.base;
      sum_kl += terms.kl;
      sum_pairing += terms.pairing;
      sum_si += terms.si_reg;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss_total = sum_total / batches;
    rec.loss_base = sum_base / batches;
    rec.loss_kl = sum_kl / batches;
    rec.loss_pairing = sum_pairing / batches;
    rec.loss_si_reg = sum_si / batches;

    if (cfg.probe_enabled && probe.size() > 0) {
      Dataset probe_view = probe.size() > cfg.probe_size ? probe.slice(0, cfg.probe_size) : probe;
      rec.clean_accuracy = accuracy(net, probe_view);
      AttackConfig probe_atk = cfg.inner_attack;
      probe_atk.loss = LossKind::CE;
      probe_atk.seed = cfg.seed + 7777;
      rec.robust_accuracy =
          run_attack(net, probe_view.inputs, probe_view.labels, probe_atk).robust_accuracy;
    }
    out.log.epochs.push_back(rec);
  }

  out.network = net;
  out.checkpoint = Checkpoint::from_network(net, static_cast<uint32_t>(opt.epochs), cfg.seed,
                                            config_hash);
  return out;
}

}  // namespace sipgd
