#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace safebid::nn {

using Rng = std::mt19937_64;

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

// Fully connected network: rectified-linear units on every layer except the
// last, whose units are the identity.
struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index input_size() const { return layers.front().w.cols(); }
  Eigen::Index output_size() const { return layers.back().w.rows(); }
  std::size_t param_count() const;
  // Flat view over weights (row-major per layer) followed by biases, layer by layer.
  double& param(std::size_t k);
  double param(std::size_t k) const;
};

// sizes = {in, h1, ..., out}; all parameters zero.
MlpParams make_mlp(std::span<const int> sizes);
MlpParams make_mlp(int in, int h1, int h2, int out);

void init_uniform(MlpParams& p, double lo, double hi, Rng& rng);

// Throws ShapeMismatch when layers do not chain.
void check_shapes(const MlpParams& p);

bool all_finite(const MlpParams& p);

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x);
// One sample per column.
Eigen::MatrixXd mlp_forward_batch(const MlpParams& p, const Eigen::MatrixXd& x);

struct MlpGradients {
  std::vector<Layer> layers;  // same shapes as the parameters
  Eigen::MatrixXd input;      // d/dx, one column per sample
};

// Reverse-mode gradients of sum_j output_j . upstream_j with respect to every
// parameter (summed over the batch) and to each input column. The ReLU
// derivative at zero is taken as zero.
MlpGradients mlp_gradients_batch(const MlpParams& p, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& upstream);
MlpGradients mlp_gradients(const MlpParams& p, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& upstream);

// p <- p - rate * g
void apply_gradient(MlpParams& p, const MlpGradients& g, double rate);

// Elementwise target <- (1 - tau) * behaviour + tau * target. tau = 1 keeps
// the target, tau = 0 copies the behaviour network.
MlpParams soft_update(const MlpParams& behaviour, const MlpParams& target, double tau);

}  // namespace safebid::nn
