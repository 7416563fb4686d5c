#pragma once

#include <string>
#include <vector>

#include "sipgd/tensor.hpp"

namespace sipgd {

enum class LossKind { CE, CW, DLR, SI_CE, SI_CE_MARGIN, KL, BCE_MART };

// Hyperparameters shared by the loss family. `s` tempers the cosine logits,
// `m` is the angular margin subtracted from the true-class cosine.
// `margin_on_logits` switches CW/DLR from softmax probabilities (the default
// reading) to raw logits for comparison runs.
struct LossParams {
  double s = 15.0;
  double m = 0.2;
  bool margin_on_logits = false;
};

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);

// All losses reduce by mean over the batch; *_each variants expose the
// per-example values (shape {batch}) used for restart selection.

// Cross-entropy on logits, log-sum-exp form with max subtraction.
Tensor ce_logits_each(const Tensor& logits, const std::vector<int>& y);
Tensor ce_logits(const Tensor& logits, const std::vector<int>& y);

// Margin loss -p_y + max_{i != y} p_i on softmax outputs. Per-example sign
// tracks classification: negative iff the example is still classified y.
Tensor cw_loss_each(const Tensor& probs, const std::vector<int>& y);
Tensor cw_loss(const Tensor& probs, const std::vector<int>& y);

// Difference-of-logits-ratio form on softmax outputs; requires K >= 3.
Tensor dlr_loss_each(const Tensor& probs, const std::vector<int>& y);
Tensor dlr_loss(const Tensor& probs, const std::vector<int>& y);

// Cross-entropy over tempered cosine logits s * cos(theta).
Tensor si_ce_each(const Tensor& cos, const std::vector<int>& y, double s);
Tensor si_ce(const Tensor& cos, const std::vector<int>& y, double s);

// Margin variant: the true-class entry becomes s * (cos(theta_y) - m).
Tensor si_ce_margin_each(const Tensor& cos, const std::vector<int>& y, double s, double m);
Tensor si_ce_margin(const Tensor& cos, const std::vector<int>& y, double s, double m);

// KL(p || q) rowwise, probabilities floored at 1e-12 inside the logs.
Tensor kl_div_each(const Tensor& p, const Tensor& q);
Tensor kl_div(const Tensor& p, const Tensor& q);

// Boosted cross-entropy -log p_y - log(1 - max_{k != y} p_k).
Tensor bce_mart_each(const Tensor& probs, const std::vector<int>& y);
Tensor bce_mart(const Tensor& probs, const std::vector<int>& y);

// Largest attainable softmax(s*cos)_y for cosines in [-1,1]; the gap from 1
// is what keeps the tempered-cosine gradient alive in double precision.
double si_saturation_bound(int num_classes, double s);

}  // namespace sipgd
