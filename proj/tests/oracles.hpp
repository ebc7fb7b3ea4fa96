#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mird/schedule.hpp"

namespace mird::testing {

struct Conditional {
  double mean;
  double var;
};

// Joint of (x_{t-1}, x_t) given the clean value x0, from the forward kernels:
//   x_{t-1} = x0 + sum_i eta_i(t-1) (J_i - x0) + kappa sqrt(S(t-1)) e1
//   x_t     = x_{t-1} + sum_i alpha_i(t) (J_i - x0) + kappa sqrt(A(t)) e2
// conditioned on x_t.
inline Conditional gaussian_conditioning(const std::vector<double>& eta_prev, const std::vector<double>& eta_t,
                                         double kappa, double x0, const std::vector<double>& j, double x_t) {
  double s_prev = 0, s_t = 0, m_prev = x0, m_t = x0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    s_prev += eta_prev[i];
    s_t += eta_t[i];
    m_prev += eta_prev[i] * (j[i] - x0);
    m_t += eta_t[i] * (j[i] - x0);
  }
  const double v_prev = kappa * kappa * s_prev;
  const double v_t = v_prev + kappa * kappa * (s_t - s_prev);
  const double cov = v_prev;
  return {m_prev + cov / v_t * (x_t - m_t), v_prev - cov * cov / v_t};
}

// Random valid ladder of `steps` rungs with a random simplex partition.
struct RandomLadder {
  std::vector<double> eta_sum;
  std::vector<double> weights;
  double kappa;
};

inline RandomLadder random_ladder(std::mt19937_64& gen, int steps, int conditions) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomLadder r;
  std::vector<double> inc(steps);
  double total = 0;
  for (double& v : inc) total += v = 0.05 + u(gen);
  const double top = 0.05 + 0.94 * u(gen);
  r.eta_sum.push_back(0.0);
  double acc = 0;
  for (double v : inc) r.eta_sum.push_back(acc += v / total * top);
  r.eta_sum.back() = top;
  double ws = 0;
  for (int i = 0; i < conditions; ++i) ws += r.weights.emplace_back(0.05 + u(gen));
  for (double& w : r.weights) w /= ws;
  r.kappa = 0.1 + 3.0 * u(gen);
  return r;
}

}  // namespace mird::testing
