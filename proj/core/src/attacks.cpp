#include "sipgd/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sipgd/rng.hpp"

namespace sipgd {

namespace {

std::vector<double> row_of(const Tensor& t, int i) {
  int64_t stride = t.size() / t.dim(0);
  const auto& d = t.data();
  return std::vector<double>(d.begin() + i * stride, d.begin() + (i + 1) * stride);
}

void copy_row(std::vector<double>& dst, const std::vector<double>& src, int i, int64_t stride) {
  std::copy(src.begin() + i * stride, src.begin() + (i + 1) * stride, dst.begin() + i * stride);
}

double project(double v, double center, double eps, double lo, double hi) {
  v = std::min(std::max(v, center - eps), center + eps);
  return std::min(std::max(v, lo), hi);
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (!(eta > 0.0)) throw std::invalid_argument("attack: eta must be positive");
  if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
  if (restarts < 1) throw std::invalid_argument("attack: restarts must be >= 1");
  if (input_lo >= input_hi) throw std::invalid_argument("attack: bad input bounds");
}

AttackObjective objective_for(LossKind kind, const std::vector<int>& y, const LossParams& params) {
  switch (kind) {
    case LossKind::CE:
      return [y](const Network& net, const Tensor& xa) {
        return ce_logits_each(net.forward(xa).logits, y);
      };
    case LossKind::CW:
      return [y, params](const Network& net, const Tensor& xa) {
        Tensor logits = net.forward(xa).logits;
        return cw_loss_each(params.margin_on_logits ? logits : softmax(logits), y);
      };
    case LossKind::DLR:
      return [y, params](const Network& net, const Tensor& xa) {
        Tensor logits = net.forward(xa).logits;
        return dlr_loss_each(params.margin_on_logits ? logits : softmax(logits), y);
      };
    case LossKind::SI_CE:
      return [y, params](const Network& net, const Tensor& xa) {
        ForwardResult f = net.forward(xa);
        return si_ce_each(cos_theta(f.z, net.softmax_weight()), y, params.s);
      };
    case LossKind::SI_CE_MARGIN:
      return [y, params](const Network& net, const Tensor& xa) {
        ForwardResult f = net.forward(xa);
        return si_ce_margin_each(cos_theta(f.z, net.softmax_weight()), y, params.s, params.m);
      };
    default:
      throw std::invalid_argument("loss kind '" + loss_kind_name(kind) +
                                  "' is not a standalone attack objective");
  }
}

void check_feasible(const Tensor& adv, const Tensor& x, double epsilon, double lo, double hi) {
  const auto& a = adv.data();
  const auto& c = x.data();
  if (a.size() != c.size()) throw std::logic_error("feasibility check: size mismatch");
  const double tol = 1e-12;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - c[i]) > epsilon + tol || a[i] < lo - tol || a[i] > hi + tol) {
      throw std::runtime_error("adversarial example violates the epsilon-ball or input bounds");
    }
  }
}

namespace {

Tensor pgd_step_with_objective(const Network& net, const Tensor& x_t, const Tensor& x,
                               const AttackConfig& cfg, const AttackObjective& objective) {
  Tensor xa = x_t.as_variable();
  Tensor per_example = objective(net, xa);
  backward(mean(per_example));
  const auto& g = xa.grad();
  const auto& cur = x_t.data();
  const auto& center = x.data();
  std::vector<double> next(cur.size());
  for (size_t i = 0; i < cur.size(); ++i) {
    double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    next[i] = project(cur[i] + cfg.eta * s, center[i], cfg.epsilon, cfg.input_lo, cfg.input_hi);
  }
  return Tensor::from(x_t.shape(), std::move(next));
}

}  // namespace

Tensor pgd_step(const Network& net, const Tensor& x_t, const Tensor& x,
                const std::vector<int>& y, const AttackConfig& cfg) {
  return pgd_step_with_objective(net, x_t, x, cfg, objective_for(cfg.loss, y, cfg.loss_params));
}

AttackResult run_attack_with_objective(const Network& net, const Tensor& x,
                                       const std::vector<int>& y, const AttackConfig& cfg,
                                       const AttackObjective& objective) {
  cfg.validate();
  int n = x.dim(0);
  if (static_cast<int>(y.size()) != n) throw std::invalid_argument("attack: label count mismatch");
  int64_t stride = x.size() / n;

  AttackResult result;
  result.success.assign(static_cast<size_t>(n), 0);
  result.final_loss.assign(static_cast<size_t>(n), 0.0);

  std::vector<int> clean_pred = predict(net, x);
  int clean_correct = 0;
  for (int i = 0; i < n; ++i) {
    if (clean_pred[static_cast<size_t>(i)] == y[static_cast<size_t>(i)]) ++clean_correct;
  }
  result.clean_accuracy = static_cast<double>(clean_correct) / n;

  std::vector<double> kept(x.data());
  std::vector<double> best_loss(static_cast<size_t>(n), -std::numeric_limits<double>::infinity());

  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(cfg.seed + static_cast<uint64_t>(r));
    const auto& base = x.data();
    std::vector<double> start(base.size());
    for (size_t i = 0; i < base.size(); ++i) {
      double v = base[i] + rng.uniform(-cfg.epsilon, cfg.epsilon);
      if (cfg.clip_init) v = std::min(std::max(v, cfg.input_lo), cfg.input_hi);
      start[i] = v;
    }
    Tensor xt = Tensor::from(x.shape(), std::move(start));
    for (int t = 0; t < cfg.steps; ++t) {
      xt = pgd_step_with_objective(net, xt, x, cfg, objective);
    }
    check_feasible(xt, x, cfg.epsilon, cfg.input_lo, cfg.input_hi);

    std::vector<double> losses;
    std::vector<int> preds;
    {
      NoGradGuard ng;
      losses = objective(net, xt).data();
      preds = predict(net, xt);
    }
    if (cfg.keep_trace) result.restart_loss_trace.push_back(losses);

    const auto& cand = xt.data();
    for (int i = 0; i < n; ++i) {
      size_t u = static_cast<size_t>(i);
      if (preds[u] != y[u]) result.success[u] = 1;
      if (losses[u] > best_loss[u]) {
        best_loss[u] = losses[u];
        copy_row(kept, cand, i, stride);
        result.final_loss[u] = losses[u];
      }
    }
  }

  result.adversarial = Tensor::from(x.shape(), std::move(kept));
  check_feasible(result.adversarial, x, cfg.epsilon, cfg.input_lo, cfg.input_hi);
  int robust = 0;
  for (uint8_t s : result.success) {
    if (!s) ++robust;
  }
  result.robust_accuracy = static_cast<double>(robust) / n;
  return result;
}

AttackResult run_attack(const Network& net, const Tensor& x, const std::vector<int>& y,
                        const AttackConfig& cfg) {
  return run_attack_with_objective(net, x, y, cfg, objective_for(cfg.loss, y, cfg.loss_params));
}

AttackResult si_pgd(const Network& net, const Tensor& x, const std::vector<int>& y,
                    AttackConfig cfg) {
  cfg.loss = LossKind::SI_CE;
  return run_attack(net, x, y, cfg);
}

AttackResult spsa_attack(const Network& net, const Tensor& x, const std::vector<int>& y,
                         const SpsaConfig& cfg) {
  if (cfg.samples < 2 || cfg.samples % 2 != 0) {
    throw std::invalid_argument("spsa: sample count must be even and >= 2");
  }
  if (cfg.iters < 1) throw std::invalid_argument("spsa: iters must be >= 1");
  NoGradGuard ng;

  int n = x.dim(0);
  if (static_cast<int>(y.size()) != n) throw std::invalid_argument("spsa: label count mismatch");
  int d = static_cast<int>(x.size() / n);
  Shape row_shape = x.shape();
  row_shape[0] = 1;

  std::vector<int> clean_pred = predict(net, x);
  int clean_correct = 0;
  for (int i = 0; i < n; ++i) {
    if (clean_pred[static_cast<size_t>(i)] == y[static_cast<size_t>(i)]) ++clean_correct;
  }

  auto cw_rows = [&](const Tensor& batch, int label) {
    Tensor probs = softmax(net.forward(batch).logits);
    std::vector<int> ys(static_cast<size_t>(batch.dim(0)), label);
    return cw_loss_each(probs, ys).data();
  };

  AttackResult result;
  result.success.assign(static_cast<size_t>(n), 0);
  result.final_loss.assign(static_cast<size_t>(n), 0.0);
  result.clean_accuracy = static_cast<double>(clean_correct) / n;
  std::vector<double> out(x.data());

  int pairs = cfg.samples / 2;
  Shape batch_shape = x.shape();
  batch_shape[0] = 2 * pairs;

  for (int i = 0; i < n; ++i) {
    Rng rng(cfg.seed + static_cast<uint64_t>(i));
    std::vector<double> xi = row_of(x, i);
    std::vector<double> cur = xi;
    int label = y[static_cast<size_t>(i)];

    for (int it = 0; it < cfg.iters; ++it) {
      // Early stop once the current iterate is misclassified.
      Tensor cur_t = Tensor::from(row_shape, cur);
      if (predict(net, cur_t)[0] != label) break;

      std::vector<double> dirs(static_cast<size_t>(pairs) * d);
      for (auto& v : dirs) v = rng.sign_bit();
      std::vector<double> batch(static_cast<size_t>(2 * pairs) * d);
      for (int p = 0; p < pairs; ++p) {
        for (int j = 0; j < d; ++j) {
          double u = dirs[static_cast<size_t>(p) * d + j];
          batch[static_cast<size_t>(2 * p) * d + j] = cur[static_cast<size_t>(j)] + cfg.delta * u;
          batch[static_cast<size_t>(2 * p + 1) * d + j] = cur[static_cast<size_t>(j)] - cfg.delta * u;
        }
      }
      std::vector<double> losses = cw_rows(Tensor::from(batch_shape, std::move(batch)), label);

      std::vector<double> grad(static_cast<size_t>(d), 0.0);
      for (int p = 0; p < pairs; ++p) {
        double diff = (losses[static_cast<size_t>(2 * p)] - losses[static_cast<size_t>(2 * p + 1)]) /
                      (2.0 * cfg.delta);
        for (int j = 0; j < d; ++j) {
          grad[static_cast<size_t>(j)] += diff * dirs[static_cast<size_t>(p) * d + j];
        }
      }
      for (int j = 0; j < d; ++j) {
        double g = grad[static_cast<size_t>(j)];
        double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        cur[static_cast<size_t>(j)] = project(cur[static_cast<size_t>(j)] + cfg.lr * s,
                                              xi[static_cast<size_t>(j)], cfg.epsilon,
                                              cfg.input_lo, cfg.input_hi);
      }
    }

    Tensor cur_t = Tensor::from(row_shape, cur);
    std::vector<int> ys{label};
    result.final_loss[static_cast<size_t>(i)] =
        cw_loss_each(softmax(net.forward(cur_t).logits), ys).data()[0];
    if (predict(net, cur_t)[0] != label) result.success[static_cast<size_t>(i)] = 1;
    std::copy(cur.begin(), cur.end(), out.begin() + static_cast<int64_t>(i) * d);
  }

  result.adversarial = Tensor::from(x.shape(), std::move(out));
  check_feasible(result.adversarial, x, cfg.epsilon, cfg.input_lo, cfg.input_hi);
  int robust = 0;
  for (uint8_t s : result.success) {
    if (!s) ++robust;
  }
  result.robust_accuracy = static_cast<double>(robust) / n;
  return result;
}

}  // namespace sipgd
