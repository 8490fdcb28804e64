#include "safebid/mlp.hpp"

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::nn {

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

double& MlpParams::param(std::size_t k) {
  for (Layer& l : layers) {
    const auto nw = static_cast<std::size_t>(l.w.size());
    if (k < nw) {
      const auto cols = static_cast<std::size_t>(l.w.cols());
      return l.w(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols));
    }
    k -= nw;
    const auto nb = static_cast<std::size_t>(l.b.size());
    if (k < nb) return l.b(static_cast<Eigen::Index>(k));
    k -= nb;
  }
  throw ShapeMismatch("parameter index out of range");
}

double MlpParams::param(std::size_t k) const { return const_cast<MlpParams&>(*this).param(k); }

MlpParams make_mlp(std::span<const int> sizes) {
  if (sizes.size() < 2) throw ShapeMismatch("network needs at least an input and output size");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] < 1 || sizes[l + 1] < 1) throw ShapeMismatch("layer sizes must be positive");
    p.layers.push_back(Layer{Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]),
                             Eigen::VectorXd::Zero(sizes[l + 1])});
  }
  return p;
}

MlpParams make_mlp(int in, int h1, int h2, int out) {
  const int sizes[] = {in, h1, h2, out};
  return make_mlp(sizes);
}

void init_uniform(MlpParams& p, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Layer& l : p.layers) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = dist(rng);
  }
}

void check_shapes(const MlpParams& p) {
  if (p.layers.empty()) throw ShapeMismatch("network has no layers");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Layer& layer = p.layers[l];
    if (layer.b.size() != layer.w.rows()) {
      throw ShapeMismatch(fmt::format("layer {}: bias size {} vs {} rows", l, layer.b.size(),
                                      layer.w.rows()));
    }
    if (l > 0 && layer.w.cols() != p.layers[l - 1].w.rows()) {
      throw ShapeMismatch(fmt::format("layer {}: takes {} inputs but previous layer emits {}", l,
                                      layer.w.cols(), p.layers[l - 1].w.rows()));
    }
  }
}

bool all_finite(const MlpParams& p) {
  for (const Layer& l : p.layers) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

namespace {

struct Cache {
  std::vector<Eigen::MatrixXd> act;  // act[0] = input, act[l+1] = output of layer l
  std::vector<Eigen::MatrixXd> pre;  // pre-activation of layer l
};

Cache forward_cached(const MlpParams& p, const Eigen::MatrixXd& x) {
  check_shapes(p);
  if (x.rows() != p.input_size()) {
    throw ShapeMismatch(
        fmt::format("input has {} rows, network expects {}", x.rows(), p.input_size()));
  }
  Cache c;
  c.act.reserve(p.layers.size() + 1);
  c.pre.reserve(p.layers.size());
  c.act.push_back(x);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Layer& layer = p.layers[l];
    Eigen::MatrixXd z = layer.w * c.act.back();
    z.colwise() += layer.b;
    const bool hidden = l + 1 < p.layers.size();
    c.act.push_back(hidden ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    c.pre.push_back(std::move(z));
  }
  return c;
}

}  // namespace

Eigen::MatrixXd mlp_forward_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
  return forward_cached(p, x).act.back();
}

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  return mlp_forward_batch(p, x);
}

MlpGradients mlp_gradients_batch(const MlpParams& p, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& upstream) {
  const Cache c = forward_cached(p, x);
  if (upstream.rows() != p.output_size() || upstream.cols() != x.cols()) {
    throw ShapeMismatch(fmt::format("upstream is {}x{}, expected {}x{}", upstream.rows(),
                                    upstream.cols(), p.output_size(), x.cols()));
  }
  const std::size_t nl = p.layers.size();
  MlpGradients g;
  g.layers.resize(nl);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = nl; k-- > 0;) {
    if (k + 1 < nl) delta = delta.cwiseProduct((c.pre[k].array() > 0.0).cast<double>().matrix());
    g.layers[k].w = delta * c.act[k].transpose();
    g.layers[k].b = delta.rowwise().sum();
    delta = p.layers[k].w.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

MlpGradients mlp_gradients(const MlpParams& p, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& upstream) {
  return mlp_gradients_batch(p, x, upstream);
}

void apply_gradient(MlpParams& p, const MlpGradients& g, double rate) {
  if (g.layers.size() != p.layers.size()) throw ShapeMismatch("gradient layer count differs");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (g.layers[l].w.rows() != p.layers[l].w.rows() ||
        g.layers[l].w.cols() != p.layers[l].w.cols() ||
        g.layers[l].b.size() != p.layers[l].b.size()) {
      throw ShapeMismatch(fmt::format("gradient shape differs at layer {}", l));
    }
    p.layers[l].w -= rate * g.layers[l].w;
    p.layers[l].b -= rate * g.layers[l].b;
  }
}

MlpParams soft_update(const MlpParams& behaviour, const MlpParams& target, double tau) {
  if (behaviour.layers.size() != target.layers.size()) {
    throw ShapeMismatch("soft update between networks of different depth");
  }
  MlpParams out = target;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    const Layer& b = behaviour.layers[l];
    Layer& o = out.layers[l];
    if (b.w.rows() != o.w.rows() || b.w.cols() != o.w.cols() || b.b.size() != o.b.size()) {
      throw ShapeMismatch(fmt::format("soft update shape differs at layer {}", l));
    }
    o.w = (1.0 - tau) * b.w + tau * o.w;
    o.b = (1.0 - tau) * b.b + tau * o.b;
  }
  return out;
}

}  // namespace safebid::nn
