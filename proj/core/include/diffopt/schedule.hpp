#pragma once

#include <vector>

#include "diffopt/types.hpp"

namespace diffopt {

/// Fixed linear variance schedule with every per-step coefficient used by
/// the forward (noising) and reverse (denoising) processes.
///
/// Timesteps are 1-based: valid t lie in [1, steps()]. Index 0 denotes the
/// clean target and never has a slot. With alpha = 1 - beta and
/// alpha_bar = prod alpha, the reverse-step coefficients are
///
///   gamma = 1 / sqrt(alpha)
///   eta   = beta / (sqrt(alpha) * sqrt(1 - alpha_bar))
///   xi    = sigma = sqrt(beta)
///
/// Immutable after construction.
class DiffusionSchedule {
 public:
  /// beta_1 = beta_start and beta_T = beta_end, linearly interpolated in
  /// between. Throws std::invalid_argument on T < 1 or bounds outside (0, 1)
  /// or beta_start > beta_end.
  static DiffusionSchedule linear(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_[slot(t)]; }
  double alpha(int t) const { return alpha_[slot(t)]; }
  double alpha_bar(int t) const { return alpha_bar_[slot(t)]; }
  double sigma(int t) const { return sigma_[slot(t)]; }
  double gamma(int t) const { return gamma_[slot(t)]; }
  double eta(int t) const { return eta_[slot(t)]; }
  double xi(int t) const { return sigma_[slot(t)]; }

  /// Throws std::out_of_range unless 1 <= t <= steps().
  void check_timestep(int t) const;

 private:
  DiffusionSchedule() = default;
  std::size_t slot(int t) const {
    check_timestep(t);
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  std::vector<double> gamma_;
  std::vector<double> eta_;
};

/// Closed-form forward diffusion: sqrt(alpha_bar_t) w0 + sqrt(1 - alpha_bar_t) eps.
Matrix q_sample(const Matrix& w0, int t, const Matrix& eps, const DiffusionSchedule& sched);

/// Reverse step (1/sqrt(alpha_t)) (w_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat).
/// Deterministic: the sigma_t z term is omitted.
Matrix denoise_step(const Matrix& wt, const Matrix& eps_hat, int t, const DiffusionSchedule& sched);
/// Stochastic reverse step, adds sigma_t z.
Matrix denoise_step(const Matrix& wt, const Matrix& eps_hat, int t, const DiffusionSchedule& sched,
                    const Matrix& z);

/// Same reverse step written as a gradient step plus a momentum term plus
/// an uncertainty term: (w_t - eta_t eps_hat) + (gamma_t - 1) w_t + xi_t z.
/// Kept as an independent code path to check denoise_step against.
Matrix decomposed_denoise_step(const Matrix& wt, const Matrix& eps_hat, int t,
                               const DiffusionSchedule& sched);
Matrix decomposed_denoise_step(const Matrix& wt, const Matrix& eps_hat, int t,
                               const DiffusionSchedule& sched, const Matrix& z);

}  // namespace diffopt
