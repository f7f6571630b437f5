#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bomlloc/common.hpp"
#include "bomlloc/net.hpp"
#include "bomlloc/prob.hpp"
#include "bomlloc/rng.hpp"
#include "bomlloc/task.hpp"

namespace bomlloc {

// Temperatures of the PAC-Bayesian objective and the Monte-Carlo sample
// count for the log-partition estimate.
struct TemperatureConfig {
    double beta = 50.0;     // per-task inverse temperature (default: task size)
    double lambda = 100.0;  // hyper-prior inverse temperature (default: task budget)
    int mc_samples = 5;     // L
    bool adaptation = false;  // single-task fine-tune weighting lambda/(lambda+beta)
};

// Monte-Carlo log-partition estimate
//   ln Z~ = ln sum_l exp(-beta * loss(Theta_l, S)) - ln L,  Theta_l = mu + sigma*eps_l,
// with the gradient over the stacked (mu, log_sigma) particle vector via
// the reparameterization. eps holds L standard-normal vectors of length P.
inline ValueGrad log_z_tilde_with_eps(const Architecture& arch, const PriorParticle& phi,
                                      const Task& task, const TemperatureConfig& cfg,
                                      const std::vector<std::vector<double>>& eps) {
    if (task.empty()) throw InputError("log_z_tilde: empty task");
    const std::size_t p = phi.dim();
    const std::size_t n_mc = eps.size();
    if (n_mc == 0) throw InputError("log_z_tilde: no Monte-Carlo draws");

    std::vector<double> exponents(n_mc);
    std::vector<LossGrad> grads(n_mc);
    for (std::size_t l = 0; l < n_mc; ++l) {
        const FlatParams theta = sample_theta(phi, eps[l]);
        grads[l] = loss_grad(arch, theta, task);
        if (!std::isfinite(grads[l].value)) {
            throw NumericError("log_z_tilde: non-finite loss on task domain " +
                               std::to_string(task.domain_id));
        }
        exponents[l] = -cfg.beta * grads[l].value;
    }

    // Stable log-sum-exp; beta*loss can be large.
    const double m = *std::max_element(exponents.begin(), exponents.end());
    double sum = 0.0;
    for (double e : exponents) sum += std::exp(e - m);
    ValueGrad out;
    out.value = m + std::log(sum) - std::log(static_cast<double>(n_mc));
    // Losses are nonnegative, so every exponent is <= 0 and ln Z~ <= 0.
    if (out.value > 1e-9) {
        throw NumericError("log_z_tilde: positive estimate " + std::to_string(out.value));
    }

    // grad = -beta * sum_l w_l * dL/dphi with softmax weights w_l.
    out.grad.assign(2 * p, 0.0);
    for (std::size_t l = 0; l < n_mc; ++l) {
        const double w = std::exp(exponents[l] - m) / sum;
        const double c = -cfg.beta * w;
        const auto& g = grads[l].grad;
        for (std::size_t i = 0; i < p; ++i) {
            out.grad[i] += c * g[i];
            out.grad[p + i] += c * g[i] * eps[l][i] * std::exp(phi.log_sigma[i]);
        }
    }
    return out;
}

inline ValueGrad log_z_tilde(const Architecture& arch, const PriorParticle& phi, const Task& task,
                             const TemperatureConfig& cfg, Rng& rng) {
    std::vector<std::vector<double>> eps(static_cast<std::size_t>(cfg.mc_samples));
    for (auto& e : eps) e = rng.normal_vec(phi.dim());
    return log_z_tilde_with_eps(arch, phi, task, cfg, eps);
}

// Gradient of the log hyper-posterior at phi (Z^H cancels):
//   grad ln Q* = grad ln P + w * sum_i grad ln Z~(S_i, P_phi),
// w = lambda/(lambda + n*beta), or lambda/(lambda + beta) in single-task
// adaptation mode.
inline std::vector<double> hyperposterior_score(const Architecture& arch, const PriorParticle& phi,
                                                const std::vector<Task>& tasks,
                                                const TemperatureConfig& cfg,
                                                const HyperPrior& hyper, Rng& rng) {
    if (tasks.empty()) throw InputError("hyperposterior_score: empty task list");
    const double n = static_cast<double>(tasks.size());
    const double w = cfg.adaptation && tasks.size() == 1
                         ? cfg.lambda / (cfg.lambda + cfg.beta)
                         : cfg.lambda / (cfg.lambda + n * cfg.beta);
    auto score = hyperprior_log_density_grad(phi, hyper).grad;
    for (const auto& task : tasks) {
        const auto lz = log_z_tilde(arch, phi, task, cfg, rng);
        for (std::size_t i = 0; i < score.size(); ++i) score[i] += w * lz.grad[i];
    }
    return score;
}

// The two data-dependent terms of the generalization bound, reported as
// diagnostics. The bound's constant term is not computed.
struct BoundTerms {
    double empirical_term = 0.0;  // -(1/n) sum_i (1/beta) mean_k ln Z~(S_i, phi_k)
    double kl_term = 0.0;         // (1/lambda + 1/(n*beta)) * mean_k KL(phi_k || null particle)
};

inline BoundTerms bound_terms(const Architecture& arch, const std::vector<PriorParticle>& particles,
                              const std::vector<Task>& tasks, const TemperatureConfig& cfg,
                              const HyperPrior& hyper, Rng& rng) {
    if (particles.empty()) throw InputError("bound_terms: empty particle set");
    if (tasks.empty()) throw InputError("bound_terms: empty task list");
    const double n = static_cast<double>(tasks.size());
    const double k = static_cast<double>(particles.size());

    BoundTerms out;
    for (const auto& task : tasks) {
        double mean_lz = 0.0;
        for (const auto& phi : particles) {
            mean_lz += log_z_tilde(arch, phi, task, cfg, rng).value / k;
        }
        out.empirical_term += -mean_lz / (cfg.beta * n);
    }

    // KL diagnostic at the Theta level: particle Gaussian vs. the Gaussian a
    // zero particle with sigma = sigma_p would induce.
    PriorParticle ref;
    ref.mu.assign(particles.front().dim(), 0.0);
    ref.log_sigma.assign(particles.front().dim(), std::log(hyper.sigma_p));
    double mean_kl = 0.0;
    for (const auto& phi : particles) mean_kl += gaussian_kl(phi, ref) / k;
    out.kl_term = (1.0 / cfg.lambda + 1.0 / (n * cfg.beta)) * mean_kl;
    return out;
}

}  // namespace bomlloc
