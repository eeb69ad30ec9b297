#include "diffopt/schedule.hpp"

#include <cmath>
#include <string>

namespace diffopt {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
  }
}

}  // namespace

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule: number of steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start < 1.0) || !(beta_end > 0.0 && beta_end < 1.0)) {
    throw std::invalid_argument("schedule: beta bounds must lie in (0, 1)");
  }
  if (beta_start > beta_end) throw std::invalid_argument("schedule: beta_start > beta_end");

  const auto n = static_cast<std::size_t>(steps);
  DiffusionSchedule s;
  s.beta_.resize(n);
  s.alpha_.resize(n);
  s.alpha_bar_.resize(n);
  s.sigma_.resize(n);
  s.gamma_.resize(n);
  s.eta_.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    if (n == 1) {
      s.beta_[i] = beta_start;
    } else if (i + 1 == n) {
      s.beta_[i] = beta_end;
    } else {
      const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
      s.beta_[i] = beta_start + (beta_end - beta_start) * frac;
    }
    s.alpha_[i] = 1.0 - s.beta_[i];
    s.alpha_bar_[i] = i == 0 ? s.alpha_[0] : s.alpha_bar_[i - 1] * s.alpha_[i];
    s.sigma_[i] = std::sqrt(s.beta_[i]);
    s.gamma_[i] = 1.0 / std::sqrt(s.alpha_[i]);
    s.eta_[i] = s.beta_[i] / (std::sqrt(s.alpha_[i]) * std::sqrt(1.0 - s.alpha_bar_[i]));
  }
  return s;
}

void DiffusionSchedule::check_timestep(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
}

Matrix q_sample(const Matrix& w0, int t, const Matrix& eps, const DiffusionSchedule& sched) {
  sched.check_timestep(t);
  require_same_shape(w0, eps, "q_sample");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * w0 + std::sqrt(1.0 - ab) * eps;
}

Matrix denoise_step(const Matrix& wt, const Matrix& eps_hat, int t, const DiffusionSchedule& sched) {
  sched.check_timestep(t);
  require_same_shape(wt, eps_hat, "denoise_step");
  const double noise_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  return (wt - noise_coef * eps_hat) / std::sqrt(sched.alpha(t));
}

Matrix denoise_step(const Matrix& wt, const Matrix& eps_hat, int t, const DiffusionSchedule& sched,
                    const Matrix& z) {
  require_same_shape(wt, z, "denoise_step");
  return denoise_step(wt, eps_hat, t, sched) + sched.sigma(t) * z;
}

Matrix decomposed_denoise_step(const Matrix& wt, const Matrix& eps_hat, int t,
                               const DiffusionSchedule& sched) {
  sched.check_timestep(t);
  require_same_shape(wt, eps_hat, "decomposed_denoise_step");
  const Matrix descent = wt - sched.eta(t) * eps_hat;
  const Matrix momentum = (sched.gamma(t) - 1.0) * wt;
  return descent + momentum;
}

Matrix decomposed_denoise_step(const Matrix& wt, const Matrix& eps_hat, int t,
                               const DiffusionSchedule& sched, const Matrix& z) {
  require_same_shape(wt, z, "decomposed_denoise_step");
  return decomposed_denoise_step(wt, eps_hat, t, sched) + sched.xi(t) * z;
}

}  // namespace diffopt
