#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/net.hpp"
#include "bomlloc/rng.hpp"

namespace bomlloc {

// Diagonal Gaussian over FlatParams: Theta ~ N(mu, diag(exp(log_sigma)^2)).
// This is the unit SVGD acts on.
struct PriorParticle {
    std::vector<double> mu;
    std::vector<double> log_sigma;

    std::size_t dim() const { return mu.size(); }

    bool operator==(const PriorParticle&) const = default;
};

// Spherical Gaussian over (mu, log_sigma) jointly, centered at mu = 0 and
// log_sigma = ln(sigma_p): the default prior is N(0, sigma_p^2 I) over
// network weights, and particles are regularized toward it.
struct HyperPrior {
    double sigma_p = 0.5;
};

// Stacked mean of the hyper-prior for particles of dimension p.
inline std::vector<double> hyperprior_center(std::size_t p, const HyperPrior& hyper) {
    std::vector<double> c(2 * p, 0.0);
    const double ls = std::log(hyper.sigma_p);
    for (std::size_t i = p; i < 2 * p; ++i) c[i] = ls;
    return c;
}

// Stack (mu, log_sigma) into one 2P vector; the particle-space coordinate
// system used by SVGD and the hyper-prior.
inline std::vector<double> stack_particle(const PriorParticle& phi) {
    std::vector<double> v;
    v.reserve(2 * phi.dim());
    v.insert(v.end(), phi.mu.begin(), phi.mu.end());
    v.insert(v.end(), phi.log_sigma.begin(), phi.log_sigma.end());
    return v;
}

inline PriorParticle unstack_particle(const std::vector<double>& v) {
    if (v.size() % 2 != 0) throw InputError("stacked particle vector has odd length");
    const std::size_t p = v.size() / 2;
    PriorParticle phi;
    phi.mu.assign(v.begin(), v.begin() + p);
    phi.log_sigma.assign(v.begin() + p, v.end());
    return phi;
}

inline PriorParticle sample_particle(std::size_t p, const HyperPrior& hyper, Rng& rng) {
    PriorParticle phi;
    phi.mu.resize(p);
    phi.log_sigma.resize(p);
    const double center = std::log(hyper.sigma_p);
    for (auto& m : phi.mu) m = hyper.sigma_p * rng.normal();
    for (auto& s : phi.log_sigma) s = center + hyper.sigma_p * rng.normal();
    return phi;
}

// Reparameterized draw: Theta = mu + exp(log_sigma) * eps, elementwise.
inline FlatParams sample_theta(const PriorParticle& phi, const std::vector<double>& eps) {
    if (eps.size() != phi.dim()) {
        throw InputError("sample_theta: eps length " + std::to_string(eps.size()) +
                         " != particle dim " + std::to_string(phi.dim()));
    }
    FlatParams theta(phi.dim());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = phi.mu[i] + std::exp(phi.log_sigma[i]) * eps[i];
    }
    return theta;
}

struct ValueGrad {
    double value = 0.0;
    std::vector<double> grad;
};

// Log-density (with its additive constant) and gradient of the hyper-prior
// at the stacked particle vector.
inline ValueGrad hyperprior_log_density_grad(const PriorParticle& phi, const HyperPrior& hyper) {
    const auto v = stack_particle(phi);
    const auto c = hyperprior_center(phi.dim(), hyper);
    const double var = hyper.sigma_p * hyper.sigma_p;
    ValueGrad out;
    out.grad.resize(v.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - c[i];
        sq += d * d;
        out.grad[i] = -d / var;
    }
    const double d = static_cast<double>(v.size());
    out.value = -0.5 * sq / var - 0.5 * d * std::log(6.283185307179586476925286766559 * var);
    return out;
}

// Closed-form KL divergence between the two diagonal Gaussians the
// particles parameterize. Used only as a bound diagnostic.
inline double gaussian_kl(const PriorParticle& q, const PriorParticle& p) {
    if (q.dim() != p.dim()) throw InputError("gaussian_kl: dimension mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double lsq = q.log_sigma[i];
        const double lsp = p.log_sigma[i];
        const double var_q = std::exp(2.0 * lsq);
        const double var_p = std::exp(2.0 * lsp);
        const double dm = q.mu[i] - p.mu[i];
        kl += lsp - lsq + (var_q + dm * dm) / (2.0 * var_p) - 0.5;
    }
    return kl;
}

}  // namespace bomlloc
