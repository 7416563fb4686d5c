#include "sipgd/network.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sipgd/rng.hpp"

namespace sipgd {

namespace {

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  double sd = std::sqrt(2.0 / fan_in);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = sd * rng.normal();
  return Tensor::from(std::move(shape), std::move(data));
}

struct ConvGeom {
  int c = 1, h = 28, w = 28;
};

ConvGeom parse_geom(const std::string& tok) {
  ConvGeom g;
  char x1 = 0, x2 = 0;
  std::istringstream is(tok);
  if (!(is >> g.c >> x1 >> g.h >> x2 >> g.w) || x1 != 'x' || x2 != 'x' || g.c < 1 || g.h < 1 ||
      g.w < 1) {
    throw std::invalid_argument("bad convnet geometry '" + tok + "' (expected <c>x<h>x<w>)");
  }
  return g;
}

}  // namespace

Network Network::init(const std::string& arch, uint64_t seed) {
  std::istringstream is(arch);
  std::string kind;
  is >> kind;
  Rng rng(seed);
  Network net;
  net.arch_ = arch;

  if (kind == "mlp") {
    std::vector<int> dims;
    int d;
    while (is >> d) dims.push_back(d);
    if (dims.size() < 2) throw std::invalid_argument("mlp arch needs at least input and class counts");
    for (int v : dims) {
      if (v < 1) throw std::invalid_argument("mlp arch dimensions must be positive");
    }
    int K = dims.back();
    if (K < 2) throw std::invalid_argument("mlp arch needs at least 2 classes");
    // dims = in, h1, ..., hk, K; hidden stack ends at the feature dimension.
    int feat = dims.size() == 2 ? dims[0] : dims[dims.size() - 2];
    for (size_t i = 0; i + 2 < dims.size(); ++i) {
      Layer dense;
      dense.kind = Layer::Kind::Dense;
      dense.weight = he_normal({dims[i], dims[i + 1]}, dims[i], rng);
      dense.bias = Tensor::zeros({dims[i + 1]});
      net.backbone_.push_back(dense);
      net.backbone_.push_back(Layer{Layer::Kind::Relu, Tensor(), Tensor(), 1, 0});
    }
    net.softmax_weight_ = he_normal({feat, K}, feat, rng);
    net.softmax_bias_ = Tensor::zeros({K});
    return net;
  }

  if (kind == "convnet") {
    std::string geom_tok;
    int K = 0;
    if (!(is >> geom_tok >> K) || K < 2) {
      throw std::invalid_argument("convnet arch: expected 'convnet <c>x<h>x<w> <classes>'");
    }
    ConvGeom g = parse_geom(geom_tok);
    // conv c->8 s2, conv 8->16 s2, dense -> 96 features.
    Layer c1;
    c1.kind = Layer::Kind::Conv;
    c1.weight = he_normal({8, g.c, 3, 3}, g.c * 9, rng);
    c1.bias = Tensor::zeros({8});
    c1.stride = 2;
    c1.padding = 1;
    int h1 = (g.h + 2 - 3) / 2 + 1, w1 = (g.w + 2 - 3) / 2 + 1;
    Layer c2;
    c2.kind = Layer::Kind::Conv;
    c2.weight = he_normal({16, 8, 3, 3}, 8 * 9, rng);
    c2.bias = Tensor::zeros({16});
    c2.stride = 2;
    c2.padding = 1;
    int h2 = (h1 + 2 - 3) / 2 + 1, w2 = (w1 + 2 - 3) / 2 + 1;
    int flat = 16 * h2 * w2;
    Layer d1;
    d1.kind = Layer::Kind::Dense;
    d1.weight = he_normal({flat, 96}, flat, rng);
    d1.bias = Tensor::zeros({96});

    net.backbone_ = {c1,
                     Layer{Layer::Kind::Relu, Tensor(), Tensor(), 1, 0},
                     c2,
                     Layer{Layer::Kind::Relu, Tensor(), Tensor(), 1, 0},
                     Layer{Layer::Kind::Flatten, Tensor(), Tensor(), 1, 0},
                     d1,
                     Layer{Layer::Kind::Relu, Tensor(), Tensor(), 1, 0}};
    net.softmax_weight_ = he_normal({96, K}, 96, rng);
    net.softmax_bias_ = Tensor::zeros({K});
    return net;
  }

  throw std::invalid_argument("unknown architecture kind '" + kind + "'");
}

Network Network::custom(std::vector<Layer> backbone, Tensor softmax_weight, Tensor softmax_bias,
                        const std::string& arch_tag) {
  if (softmax_weight.ndim() != 2) throw std::invalid_argument("softmax weight must be [d,K]");
  if (softmax_bias.ndim() != 1 || softmax_bias.dim(0) != softmax_weight.dim(1)) {
    throw std::invalid_argument("softmax bias must be [K]");
  }
  if (softmax_weight.dim(1) < 2) throw std::invalid_argument("need at least 2 classes");
  Network net;
  net.arch_ = arch_tag;
  net.backbone_ = std::move(backbone);
  net.softmax_weight_ = std::move(softmax_weight);
  net.softmax_bias_ = std::move(softmax_bias);
  return net;
}

ForwardResult Network::forward(const Tensor& x) const {
  if (!softmax_weight_.defined()) throw std::logic_error("forward on uninitialized network");
  Tensor h = x;
  // Image batches feed dense stacks through an implicit flatten.
  if (h.ndim() == 4 && !backbone_.empty() && backbone_[0].kind == Layer::Kind::Dense) {
    h = reshape(h, {h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
  }
  for (const auto& layer : backbone_) {
    switch (layer.kind) {
      case Layer::Kind::Dense: {
        if (h.ndim() != 2) throw std::invalid_argument("dense layer expects a 2-D batch");
        if (h.dim(1) != layer.weight.dim(0)) {
          throw std::invalid_argument("dense layer input width " + std::to_string(h.dim(1)) +
                                      " != weight rows " + std::to_string(layer.weight.dim(0)));
        }
        h = matmul(h, layer.weight) + layer.bias;
        break;
      }
      case Layer::Kind::Conv: {
        h = conv2d(h, layer.weight, layer.stride, layer.padding);
        h = h + reshape(layer.bias, {1, layer.bias.dim(0), 1, 1});
        break;
      }
      case Layer::Kind::Relu:
        h = relu(h);
        break;
      case Layer::Kind::Flatten: {
        int64_t rest = h.size() / h.dim(0);
        h = reshape(h, {h.dim(0), static_cast<int>(rest)});
        break;
      }
    }
  }
  if (h.ndim() != 2) throw std::invalid_argument("backbone must end with a 2-D feature batch");
  if (h.dim(1) != softmax_weight_.dim(0)) {
    throw std::invalid_argument("feature width " + std::to_string(h.dim(1)) +
                                " != softmax layer rows " + std::to_string(softmax_weight_.dim(0)));
  }
  ForwardResult out;
  out.z = h;
  out.logits = matmul(h, softmax_weight_) + softmax_bias_;
  return out;
}

int Network::num_classes() const { return softmax_weight_.dim(1); }
int Network::feature_dim() const { return softmax_weight_.dim(0); }

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : backbone_) {
    if (layer.weight.defined()) out.push_back(layer.weight);
    if (layer.bias.defined()) out.push_back(layer.bias);
  }
  out.push_back(softmax_weight_);
  out.push_back(softmax_bias_);
  return out;
}

Network Network::with_parameters(const std::vector<Tensor>& params) const {
  Network net = *this;
  size_t at = 0;
  auto take = [&](const Tensor& like) {
    if (at >= params.size()) throw std::invalid_argument("with_parameters: too few tensors");
    const Tensor& t = params[at++];
    if (t.shape() != like.shape()) {
      throw std::invalid_argument("with_parameters: shape mismatch at tensor " + std::to_string(at - 1));
    }
    return t;
  };
  for (auto& layer : net.backbone_) {
    if (layer.weight.defined()) layer.weight = take(layer.weight);
    if (layer.bias.defined()) layer.bias = take(layer.bias);
  }
  net.softmax_weight_ = take(net.softmax_weight_);
  net.softmax_bias_ = take(net.softmax_bias_);
  if (at != params.size()) throw std::invalid_argument("with_parameters: too many tensors");
  return net;
}

int64_t Network::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

Network Network::rescale_softmax_layer(double alpha) const {
  if (!(alpha > 0.0)) throw std::invalid_argument("rescale_softmax_layer: alpha must be positive");
  Network net = *this;
  net.softmax_weight_ = (softmax_weight_ * alpha).detach();
  net.softmax_bias_ = (softmax_bias_ * alpha).detach();
  return net;
}

Tensor cos_theta(const Tensor& z, const Tensor& W) {
  if (z.ndim() != 2 || W.ndim() != 2 || z.dim(1) != W.dim(0)) {
    throw std::invalid_argument("cos_theta expects z [n,d] and W [d,K]");
  }
  const double eps_norm = 1e-12;
  const double inf = std::numeric_limits<double>::infinity();
  Tensor zw = matmul(z, W);                                      // [n,K]
  Tensor zn = clamp(sqrt(row_sum(z * z)), eps_norm, inf);        // [n,1]
  Tensor wt = transpose(W);                                      // [K,d]
  Tensor wn = clamp(sqrt(row_sum(wt * wt)), eps_norm, inf);      // [K,1]
  Tensor denom = zn * transpose(wn);                             // [n,K]
  return clamp(zw / denom, -1.0, 1.0);
}

std::vector<int> predict(const Network& net, const Tensor& x) {
  NoGradGuard ng;
  return argmax_rows(net.forward(x).logits);
}

double accuracy(const Network& net, const Dataset& data) {
  std::vector<int> pred = predict(net, data.inputs);
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace sipgd
