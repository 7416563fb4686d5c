#pragma once

#include <string>
#include <vector>

#include "sipgd/datasets.hpp"
#include "sipgd/tensor.hpp"

namespace sipgd {

// One backbone stage. Dense carries weight [in,out] and bias [out]; Conv
// carries kernel [f,c,kh,kw] and bias [f].
struct Layer {
  enum class Kind { Dense, Conv, Relu, Flatten };
  Kind kind = Kind::Relu;
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;
};

struct ForwardResult {
  Tensor z;       // penultimate feature [batch, d]
  Tensor logits;  // [batch, K]
};

// Classifier in factored form: backbone producing feature z, then an
// explicit softmax layer (W, b) so the logits are always z.W + b.
class Network {
 public:
  Network() = default;

  // Architecture descriptors:
  //   mlp <in> <h1> [<h2> ...] <classes>     dense+relu stack; last hidden is d
  //   convnet <c>x<h>x<w> <classes>          2 conv + 1 dense backbone
  static Network init(const std::string& arch, uint64_t seed);

  // Assembles a network from explicit pieces (tests, hand-built witnesses).
  static Network custom(std::vector<Layer> backbone, Tensor softmax_weight, Tensor softmax_bias,
                        const std::string& arch_tag = "custom");

  ForwardResult forward(const Tensor& x) const;

  int num_classes() const;
  int feature_dim() const;
  const Tensor& softmax_weight() const { return softmax_weight_; }
  const Tensor& softmax_bias() const { return softmax_bias_; }
  const std::vector<Layer>& backbone() const { return backbone_; }
  const std::string& arch() const { return arch_; }

  // All parameter tensors in a fixed order (backbone first, then W, b).
  std::vector<Tensor> parameters() const;
  Network with_parameters(const std::vector<Tensor>& params) const;
  int64_t parameter_count() const;

  // Equivalent classifier with logits scaled by alpha: W <- alpha W,
  // b <- alpha b. Decisions are unchanged for every input.
  Network rescale_softmax_layer(double alpha) const;

 private:
  std::string arch_;
  std::vector<Layer> backbone_;
  Tensor softmax_weight_;  // [d, K]
  Tensor softmax_bias_;    // [K]
};

// Per-class cosines between feature rows and softmax-layer weight columns,
// clamped to [-1,1]; invariant to positive rescaling of either argument.
Tensor cos_theta(const Tensor& z, const Tensor& W);

// Argmax class per input; ties break toward the lowest class index.
std::vector<int> predict(const Network& net, const Tensor& x);

double accuracy(const Network& net, const Dataset& data);

}  // namespace sipgd
