#pragma once

#include <Eigen/Dense>
#include <vector>

#include "multiref/common.hpp"
#include "multiref/models/config.hpp"

namespace multiref {

using Eigen::VectorXd;

/// Diagonal Gaussian. The stddev is strictly positive by construction: model
/// heads pass their raw outputs through softplus plus a 1e-5 floor.
struct GaussianParams {
  VectorXd mean;
  VectorXd stddev;

  int dim() const { return int(mean.size()); }
};

/// A drawn latent together with the components and weights that produced it.
struct LatentState {
  VectorXd z;
  std::vector<GaussianParams> components;
  VectorXd weights;  // pi, sums to 1
};

inline void check_components(const std::vector<GaussianParams>& components,
                             const VectorXd& pi) {
  if (components.empty()) throw ConfigError("no mixture components");
  if (int(components.size()) != int(pi.size()))
    throw ConfigError("component/weight count mismatch");
  if (pi.minCoeff() < -1e-9 || std::abs(pi.sum() - 1.0) > 1e-6)
    throw ConfigError("weights must be a probability vector");
  for (const auto& c : components)
    if (c.stddev.minCoeff() <= 0.0) throw ConfigError("stddev must be positive");
}

/// Reparameterized draw: z = mean + stddev .* noise.
inline VectorXd sample_gaussian(const GaussianParams& params, const VectorXd& noise) {
  return params.mean + params.stddev.cwiseProduct(noise);
}

/// Hard mixture draw: pick a component by weight, then sample it.
inline LatentState sample_gmm(const std::vector<GaussianParams>& components,
                              const VectorXd& pi, Rng& rng) {
  check_components(components, pi);
  int k = rng.categorical(pi);
  const auto& c = components[size_t(k)];
  VectorXd noise(c.dim());
  for (int i = 0; i < c.dim(); ++i) noise[i] = rng.normal();
  LatentState state;
  state.z = sample_gaussian(c, noise);
  state.components = components;
  state.weights = pi;
  return state;
}

/// Linear Gaussian model draw: z = sum_k pi_k * (mean_k + stddev_k .* noise_k).
/// Differentiable in all of (mean, stddev, pi); callers supply the K noise
/// vectors so the draw is reproducible.
inline LatentState sample_lgm(const std::vector<GaussianParams>& components,
                              const VectorXd& pi,
                              const std::vector<VectorXd>& noise_vectors) {
  check_components(components, pi);
  if (noise_vectors.size() != components.size())
    throw ConfigError("need one noise vector per component");
  LatentState state;
  state.z = VectorXd::Zero(components[0].dim());
  for (size_t k = 0; k < components.size(); ++k)
    state.z += pi[long(k)] * sample_gaussian(components[k], noise_vectors[k]);
  state.components = components;
  state.weights = pi;
  return state;
}

inline LatentState sample_lgm(const std::vector<GaussianParams>& components,
                              const VectorXd& pi, Rng& rng) {
  std::vector<VectorXd> noise(components.size());
  for (size_t k = 0; k < components.size(); ++k) {
    noise[k].resize(components[k].dim());
    for (int i = 0; i < components[k].dim(); ++i) noise[k][i] = rng.normal();
  }
  return sample_lgm(components, pi, noise);
}

/// The closed-form law of sample_lgm's output: a linear combination of
/// independent Gaussians is Gaussian with mean sum(pi_k mu_k) and diagonal
/// variance sum(pi_k^2 sigma_k^2).
inline GaussianParams lgm_aggregate(const std::vector<GaussianParams>& components,
                                    const VectorXd& pi) {
  check_components(components, pi);
  int d = components[0].dim();
  GaussianParams agg;
  agg.mean = VectorXd::Zero(d);
  VectorXd var = VectorXd::Zero(d);
  for (size_t k = 0; k < components.size(); ++k) {
    double w = pi[long(k)];
    agg.mean += w * components[k].mean;
    var += w * w * components[k].stddev.array().square().matrix();
  }
  agg.stddev = var.array().sqrt().matrix();
  return agg;
}

/// Mixture moments (for tests and the GMM evaluation plug-in):
/// mean = sum pi mu, var = sum pi (sigma^2 + mu^2) - mean^2.
inline GaussianParams gmm_moments(const std::vector<GaussianParams>& components,
                                  const VectorXd& pi) {
  check_components(components, pi);
  int d = components[0].dim();
  GaussianParams m;
  m.mean = VectorXd::Zero(d);
  VectorXd second = VectorXd::Zero(d);
  for (size_t k = 0; k < components.size(); ++k) {
    double w = pi[long(k)];
    m.mean += w * components[k].mean;
    second += w * (components[k].stddev.array().square() +
                   components[k].mean.array().square())
                      .matrix();
  }
  m.stddev = (second.array() - m.mean.array().square()).cwiseMax(0.0).sqrt().matrix();
  return m;
}

}  // namespace multiref
