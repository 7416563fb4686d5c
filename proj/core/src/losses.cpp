#include "sipgd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sipgd {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kDenGuard = 1e-12;
const double kInf = std::numeric_limits<double>::infinity();

void check_labels(const std::vector<int>& y, int batch, int k) {
  if (static_cast<int>(y.size()) != batch) {
    throw std::invalid_argument("label count does not match batch size");
  }
  for (int v : y) {
    if (v < 0 || v >= k) throw std::out_of_range("label out of range [0," + std::to_string(k) + ")");
  }
}

void check_2d(const Tensor& t, const char* what) {
  if (t.ndim() != 2) throw std::invalid_argument(std::string(what) + " expects a 2-D [batch,K] tensor");
}

// Per-row max over columns other than y[i], as a graph op: the true-class
// entry is masked down by a large constant so it can never win, and the
// gradient flows to the winning entry through the unmasked values.
Tensor row_max_excluding(const Tensor& t, const std::vector<int>& y) {
  int k = t.dim(1);
  Tensor mask = onehot(y, k) * (-1e9);
  return row_max(t + mask);
}

// Stable log-sum-exp per row; gradient equals row softmax.
Tensor logsumexp_rows(const Tensor& logits) {
  Tensor m = row_max(logits).detach();               // [b,1]
  Tensor e = exp(logits - m);                        // [b,K]
  return log(row_sum(e)) + m;                        // [b,1]
}

Tensor flatten_col(const Tensor& t) { return reshape(t, {t.dim(0)}); }

}  // namespace

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce") return LossKind::CE;
  if (name == "cw") return LossKind::CW;
  if (name == "dlr") return LossKind::DLR;
  if (name == "si_ce") return LossKind::SI_CE;
  if (name == "si_ce_margin") return LossKind::SI_CE_MARGIN;
  if (name == "kl") return LossKind::KL;
  if (name == "bce_mart") return LossKind::BCE_MART;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "ce";
    case LossKind::CW: return "cw";
    case LossKind::DLR: return "dlr";
    case LossKind::SI_CE: return "si_ce";
    case LossKind::SI_CE_MARGIN: return "si_ce_margin";
    case LossKind::KL: return "kl";
    case LossKind::BCE_MART: return "bce_mart";
  }
  return "?";
}

Tensor ce_logits_each(const Tensor& logits, const std::vector<int>& y) {
  check_2d(logits, "ce_logits");
  check_labels(y, logits.dim(0), logits.dim(1));
  Tensor lse = flatten_col(logsumexp_rows(logits));  // {b}
  Tensor gy = gather_cols(logits, y);                // {b}
  return lse - gy;
}

Tensor ce_logits(const Tensor& logits, const std::vector<int>& y) {
  return mean(ce_logits_each(logits, y));
}

Tensor cw_loss_each(const Tensor& probs, const std::vector<int>& y) {
  check_2d(probs, "cw_loss");
  if (probs.dim(1) < 2) throw std::invalid_argument("cw_loss requires K >= 2");
  check_labels(y, probs.dim(0), probs.dim(1));
  Tensor py = gather_cols(probs, y);
  Tensor other = flatten_col(row_max_excluding(probs, y));
  return other - py;
}

Tensor cw_loss(const Tensor& probs, const std::vector<int>& y) {
  return mean(cw_loss_each(probs, y));
}

Tensor dlr_loss_each(const Tensor& probs, const std::vector<int>& y) {
  check_2d(probs, "dlr_loss");
  int b = probs.dim(0), k = probs.dim(1);
  if (k < 3) throw std::invalid_argument("dlr_loss requires K >= 3 (third-ranked entry undefined)");
  check_labels(y, b, k);

  // pi_1 and pi_3 index positions computed from the forward values; the
  // gradient flows through the gathered entries.
  const auto& pv = probs.data();
  std::vector<int> pi1(static_cast<size_t>(b)), pi3(static_cast<size_t>(b));
  std::vector<int> order(static_cast<size_t>(k));
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < k; ++j) order[static_cast<size_t>(j)] = j;
    const double* row = &pv[static_cast<size_t>(i) * k];
    std::stable_sort(order.begin(), order.end(),
                     [row](int a, int c) { return row[a] > row[c]; });
    pi1[static_cast<size_t>(i)] = order[0];
    pi3[static_cast<size_t>(i)] = order[2];
  }

  Tensor py = gather_cols(probs, y);
  Tensor other = flatten_col(row_max_excluding(probs, y));
  Tensor num = py - other;
  Tensor den = gather_cols(probs, pi1) - gather_cols(probs, pi3) + kDenGuard;
  return neg(num / den);
}

Tensor dlr_loss(const Tensor& probs, const std::vector<int>& y) {
  return mean(dlr_loss_each(probs, y));
}

Tensor si_ce_each(const Tensor& cos, const std::vector<int>& y, double s) {
  check_2d(cos, "si_ce");
  if (!(s > 0.0)) throw std::invalid_argument("si_ce: scale s must be positive");
  check_labels(y, cos.dim(0), cos.dim(1));
  return ce_logits_each(cos * s, y);
}

Tensor si_ce(const Tensor& cos, const std::vector<int>& y, double s) {
  return mean(si_ce_each(cos, y, s));
}

Tensor si_ce_margin_each(const Tensor& cos, const std::vector<int>& y, double s, double m) {
  check_2d(cos, "si_ce_margin");
  if (!(s > 0.0)) throw std::invalid_argument("si_ce_margin: scale s must be positive");
  if (m < 0.0) throw std::invalid_argument("si_ce_margin: margin m must be non-negative");
  check_labels(y, cos.dim(0), cos.dim(1));
  // Only the true-class entry is shifted by the margin.
  Tensor shifted = cos - onehot(y, cos.dim(1)) * m;
  return ce_logits_each(shifted * s, y);
}

Tensor si_ce_margin(const Tensor& cos, const std::vector<int>& y, double s, double m) {
  return mean(si_ce_margin_each(cos, y, s, m));
}

Tensor kl_div_each(const Tensor& p, const Tensor& q) {
  check_2d(p, "kl_div");
  check_2d(q, "kl_div");
  if (p.shape() != q.shape()) throw std::invalid_argument("kl_div: p and q shapes differ");
  Tensor pf = clamp(p, kProbFloor, kInf);
  Tensor qf = clamp(q, kProbFloor, kInf);
  Tensor terms = p * (log(pf) - log(qf));
  return flatten_col(row_sum(terms));
}

Tensor kl_div(const Tensor& p, const Tensor& q) { return mean(kl_div_each(p, q)); }

Tensor bce_mart_each(const Tensor& probs, const std::vector<int>& y) {
  check_2d(probs, "bce_mart");
  if (probs.dim(1) < 2) throw std::invalid_argument("bce_mart requires K >= 2");
  check_labels(y, probs.dim(0), probs.dim(1));
  Tensor py = clamp(gather_cols(probs, y), kProbFloor, kInf);
  Tensor other = flatten_col(row_max_excluding(probs, y));
  Tensor rest = clamp(1.0 - other, kProbFloor, kInf);
  return neg(log(py)) - log(rest);
}

Tensor bce_mart(const Tensor& probs, const std::vector<int>& y) {
  return mean(bce_mart_each(probs, y));
}

double si_saturation_bound(int num_classes, double s) {
  return 1.0 / (1.0 + (num_classes - 1) * std::exp(-2.0 * s));
}

}  // namespace sipgd
