#include "sipgd/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sipgd/rng.hpp"

namespace sipgd {

namespace {

double linf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

ExperimentReport evaluate_suite(const Network& net, const Dataset& data,
                                const std::vector<NamedAttack>& attacks, std::ostream* timing) {
  ExperimentReport report;
  report.columns = {"attack", "loss",      "steps",      "restarts",
                    "epsilon", "clean_acc", "robust_acc", "mean_final_loss"};
  double clean = accuracy(net, data);
  if (attacks.empty()) {
    report.add_row({"clean", "-", "0", "0", "0", fmt_double(clean), fmt_double(clean), "0"});
    return report;
  }
  for (const auto& spec : attacks) {
    auto t0 = std::chrono::steady_clock::now();
    AttackResult res;
    std::string loss_name, steps, restarts, eps;
    if (spec.use_spsa) {
      res = spsa_attack(net, data.inputs, data.labels, spec.spsa);
      loss_name = "cw";
      steps = std::to_string(spec.spsa.iters);
      restarts = "1";
      eps = fmt_double(spec.spsa.epsilon);
    } else {
      res = run_attack(net, data.inputs, data.labels, spec.cfg);
      loss_name = loss_kind_name(spec.cfg.loss);
      steps = std::to_string(spec.cfg.steps);
      restarts = std::to_string(spec.cfg.restarts);
      eps = fmt_double(spec.cfg.epsilon);
    }
    if (timing) {
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      (*timing) << "# timing " << spec.name << " " << secs << "s\n";
    }
    report.add_row({spec.name, loss_name, steps, restarts, eps, fmt_double(res.clean_accuracy),
                    fmt_double(res.robust_accuracy), fmt_double(mean_of(res.final_loss))});
  }
  return report;
}

ExperimentReport sweep_scale(const Network& net, const Dataset& data,
                             const SweepScaleOptions& opt) {
  for (double f : opt.factors) {
    if (!(f > 0.0)) throw std::invalid_argument("sweep_scale: factors must be positive");
  }
  AttackConfig base;
  base.epsilon = opt.epsilon;
  base.eta = opt.eta > 0.0 ? opt.eta : opt.epsilon / 4.0;
  base.steps = opt.steps;
  base.restarts = opt.restarts;
  base.seed = opt.seed;
  base.loss_params.s = opt.s;

  std::vector<int> reference_pred = predict(net, data.inputs);

  ExperimentReport report;
  report.columns = {"alpha", "attack", "clean_acc", "robust_acc", "mean_final_loss"};
  for (double alpha : opt.factors) {
    Network scaled = net.rescale_softmax_layer(alpha);
    std::vector<int> pred = predict(scaled, data.inputs);
    if (pred != reference_pred) {
      throw std::runtime_error("sweep_scale: clean decisions changed under rescaling, alpha = " +
                               fmt_double(alpha));
    }
    AttackConfig pgd = base;
    pgd.loss = LossKind::CE;
    AttackResult pgd_res = run_attack(scaled, data.inputs, data.labels, pgd);
    report.add_row({fmt_double(alpha), "pgd", fmt_double(pgd_res.clean_accuracy),
                    fmt_double(pgd_res.robust_accuracy), fmt_double(mean_of(pgd_res.final_loss))});

    AttackResult si_res = si_pgd(scaled, data.inputs, data.labels, base);
    report.add_row({fmt_double(alpha), "sipgd", fmt_double(si_res.clean_accuracy),
                    fmt_double(si_res.robust_accuracy), fmt_double(mean_of(si_res.final_loss))});
  }
  return report;
}

ExperimentReport ablate(const Dataset& train_data, const Dataset& test_data,
                        const AblateOptions& opt, std::ostream* progress) {
  struct Point {
    double s, m, beta;
    bool operator==(const Point& o) const { return s == o.s && m == o.m && beta == o.beta; }
  };
  std::vector<Point> grid;
  auto push_unique = [&](Point p) {
    if (std::find(grid.begin(), grid.end(), p) == grid.end()) grid.push_back(p);
  };
  if (opt.cross_product) {
    for (double s : opt.s_values)
      for (double m : opt.m_values)
        for (double b : opt.beta_values) push_unique({s, m, b});
  } else {
    for (double s : opt.s_values) push_unique({s, opt.base.m, opt.base.beta});
    for (double m : opt.m_values) push_unique({opt.base.s, m, opt.base.beta});
    for (double b : opt.beta_values) push_unique({opt.base.s, opt.base.m, b});
  }
  if (grid.empty()) throw std::invalid_argument("ablate: empty grid");

  AttackConfig eval;
  eval.epsilon = opt.eval_epsilon;
  eval.eta = opt.eval_epsilon / 4.0;
  eval.steps = opt.eval_steps;
  eval.seed = opt.eval_seed;

  ExperimentReport report;
  report.columns = {"s", "m", "beta", "natural", "pgd", "pgdcw", "sipgd"};
  for (const Point& p : grid) {
    DefenseConfig cfg = opt.base;
    cfg.s = p.s;
    cfg.m = p.m;
    cfg.beta = p.beta;
    Network init = Network::init(opt.arch, cfg.seed);
    TrainOutput trained = train(init, train_data, test_data, cfg);
    const Network& net = trained.network;

    double natural = accuracy(net, test_data);
    AttackConfig pgd = eval;
    pgd.loss = LossKind::CE;
    AttackConfig pgdcw = eval;
    pgdcw.loss = LossKind::CW;
    AttackConfig sip = eval;
    sip.loss = LossKind::SI_CE;
    sip.loss_params.s = p.s;

    double r_pgd = run_attack(net, test_data.inputs, test_data.labels, pgd).robust_accuracy;
    double r_cw = run_attack(net, test_data.inputs, test_data.labels, pgdcw).robust_accuracy;
    double r_si = run_attack(net, test_data.inputs, test_data.labels, sip).robust_accuracy;
    report.add_row({fmt_double(p.s), fmt_double(p.m), fmt_double(p.beta), fmt_double(natural),
                    fmt_double(r_pgd), fmt_double(r_cw), fmt_double(r_si)});
    if (progress) {
      (*progress) << "# ablate s=" << p.s << " m=" << p.m << " beta=" << p.beta
                  << " done\n";
    }
  }
  return report;
}

ExperimentReport surface(const Network& net, const Dataset& data, const SurfaceOptions& opt) {
  if (opt.resolution < 3) throw std::invalid_argument("surface: resolution must be >= 3");

  auto grid_value = [&](int i) {
    return opt.halfwidth * (2.0 * i / (opt.resolution - 1) - 1.0);
  };

  if (opt.mode == SurfaceOptions::Mode::Example) {
    if (opt.example_index < 0 || opt.example_index >= data.size()) {
      throw std::invalid_argument("surface: example index out of range");
    }
    Dataset one = data.slice(opt.example_index, 1);
    int64_t d = one.inputs.size();

    AttackConfig atk;
    atk.epsilon = opt.epsilon;
    atk.eta = opt.epsilon / 4.0;
    atk.steps = opt.attack_steps;
    atk.seed = opt.seed;
    AttackResult res = run_attack(net, one.inputs, one.labels, atk);

    // v: attack perturbation normalized to unit L-inf; r: random direction.
    std::vector<double> v(static_cast<size_t>(d));
    const auto& xa = res.adversarial.data();
    const auto& x0 = one.inputs.data();
    for (int64_t i = 0; i < d; ++i) v[static_cast<size_t>(i)] = xa[static_cast<size_t>(i)] - x0[static_cast<size_t>(i)];
    double vn = linf_norm(v);
    if (vn > 0.0) {
      for (auto& t : v) t /= vn;
    }
    Rng rng(opt.seed + 1);
    std::vector<double> r(static_cast<size_t>(d));
    for (auto& t : r) t = rng.normal();
    double rn = linf_norm(r);
    if (rn > 0.0) {
      for (auto& t : r) t /= rn;
    }

    ExperimentReport report;
    report.columns = {"delta1", "delta2", "loss"};
    NoGradGuard ng;
    for (int i = 0; i < opt.resolution; ++i) {
      double d1 = grid_value(i);
      for (int j = 0; j < opt.resolution; ++j) {
        double d2 = grid_value(j);
        std::vector<double> xp(x0);
        for (int64_t k = 0; k < d; ++k) {
          size_t u = static_cast<size_t>(k);
          xp[u] = std::min(1.0, std::max(0.0, x0[u] + d1 * v[u] + d2 * r[u]));
        }
        Tensor xt = Tensor::from(one.inputs.shape(), std::move(xp));
        double loss = ce_logits(net.forward(xt).logits, one.labels).item();
        if (!std::isfinite(loss)) throw std::runtime_error("surface: non-finite loss value");
        report.add_row({fmt_double(d1), fmt_double(d2), fmt_double(loss)});
      }
    }
    return report;
  }

  // Weight mode: move the softmax weight along a random direction scaled to
  // the weight's own Frobenius norm and track the adversarial loss.
  Dataset batch = data.size() > opt.batch_limit ? data.slice(0, opt.batch_limit) : data;
  const Tensor& W = net.softmax_weight();
  Rng rng(opt.seed + 1);
  std::vector<double> dir(static_cast<size_t>(W.size()));
  for (auto& t : dir) t = rng.normal();
  double wf = 0.0, df = 0.0;
  for (double x : W.data()) wf += x * x;
  for (double x : dir) df += x * x;
  double scale = df > 0.0 ? std::sqrt(wf / df) : 0.0;
  for (auto& t : dir) t *= scale;

  AttackConfig atk;
  atk.epsilon = opt.epsilon;
  atk.eta = opt.epsilon / 4.0;
  atk.steps = opt.attack_steps;
  atk.seed = opt.seed;

  ExperimentReport report;
  report.columns = {"delta", "adv_loss"};
  for (int i = 0; i < opt.resolution; ++i) {
    double delta = grid_value(i);
    std::vector<double> wp(W.data());
    for (size_t u = 0; u < wp.size(); ++u) wp[u] += delta * dir[u];
    std::vector<Tensor> params = net.parameters();
    params[params.size() - 2] = Tensor::from(W.shape(), std::move(wp));
    Network moved = net.with_parameters(params);
    AttackResult res = run_attack(moved, batch.inputs, batch.labels, atk);
    double loss;
    {
      NoGradGuard ng;
      loss = ce_logits(moved.forward(res.adversarial).logits, batch.labels).item();
    }
    if (!std::isfinite(loss)) throw std::runtime_error("surface: non-finite loss value");
    report.add_row({fmt_double(delta), fmt_double(loss)});
  }
  return report;
}

ExperimentReport histogram(const Network& net, const Dataset& data, const HistogramOptions& opt) {
  if (opt.bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  AttackResult res = run_attack(net, data.inputs, data.labels, opt.attack);

  std::vector<double> cos_y;
  {
    NoGradGuard ng;
    ForwardResult f = net.forward(res.adversarial);
    Tensor cos = cos_theta(f.z, net.softmax_weight());
    cos_y = gather_cols(cos, data.labels).data();
  }

  std::vector<int64_t> counts(static_cast<size_t>(opt.bins), 0);
  double sum = 0.0;
  for (double v : cos_y) {
    sum += v;
    int bin = static_cast<int>(std::floor((v + 1.0) / 2.0 * opt.bins));
    bin = std::min(std::max(bin, 0), opt.bins - 1);
    ++counts[static_cast<size_t>(bin)];
  }

  ExperimentReport report;
  report.metadata.emplace_back("mean_cos_theta_y", fmt_double(sum / static_cast<double>(cos_y.size())));
  report.metadata.emplace_back("examples", std::to_string(cos_y.size()));
  report.columns = {"bin_lo", "bin_hi", "count"};
  for (int b = 0; b < opt.bins; ++b) {
    double lo = -1.0 + 2.0 * b / opt.bins;
    double hi = -1.0 + 2.0 * (b + 1) / opt.bins;
    report.add_row({fmt_double(lo), fmt_double(hi), std::to_string(counts[static_cast<size_t>(b)])});
  }
  return report;
}

}  // namespace sipgd
