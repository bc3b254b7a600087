#pragma once

// Downlink NOMA with successive interference cancellation: decoding order,
// per-user SINR, achievable rates and the QoS/SIC feasibility checks.
//
// Every "sorted" argument is indexed by decoding position: position 0 is the
// weakest user, who decodes first, and position K-1 is the strongest.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace irsnoma {

struct SystemPower {
  double p_max = 10.0;
  double sigma2 = 1e-6;

  void validate() const {
    if (!(p_max > 0.0)) throw std::invalid_argument("power: p_max must be positive");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("power: sigma2 must be positive");
  }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct RateReport {
  std::vector<std::size_t> order;  // order[pos] = user index
  std::vector<double> sinr_own;    // by user index
  std::vector<double> rate;        // by user index, bits/s/Hz
  std::vector<bool> qos;           // by user index
  double sum_rate = 0.0;
  bool qos_ok = false;
};

/// Users sorted by ascending |h_k|^2; ties keep the lower index first.
inline std::vector<std::size_t> decoding_order(std::span<const double> gain_mag2) {
  std::vector<std::size_t> order(gain_mag2.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gain_mag2[a] < gain_mag2[b];
  });
  return order;
}

namespace detail {

inline void check_sorted_inputs(std::span<const double> gain, std::span<const double> rho) {
  if (gain.size() != rho.size() || gain.empty())
    throw std::invalid_argument("noma: gain and allocation lengths differ or are empty");
}

inline double residual_power(std::span<const double> rho, std::size_t after) {
  double s = 0.0;
  for (std::size_t i = after + 1; i < rho.size(); ++i) s += rho[i];
  return s;
}

}  // namespace detail

/// SINR of the user at decoding position j decoding its own signal; users
/// stronger than j are still interference.
inline double sinr_own(std::span<const double> gain_sorted, std::span<const double> rho_sorted,
                       const SystemPower& power, std::size_t j) {
  detail::check_sorted_inputs(gain_sorted, rho_sorted);
  if (j >= gain_sorted.size()) throw std::invalid_argument("sinr_own: position out of range");
  const double g = gain_sorted[j] * power.p_max;
  return g * rho_sorted[j] / (g * detail::residual_power(rho_sorted, j) + power.sigma2);
}

/// SINR at position j when decoding the signal of weaker position t < j.
inline double sinr_cross(std::span<const double> gain_sorted, std::span<const double> rho_sorted,
                         const SystemPower& power, std::size_t t, std::size_t j) {
  detail::check_sorted_inputs(gain_sorted, rho_sorted);
  if (j >= gain_sorted.size()) throw std::invalid_argument("sinr_cross: position out of range");
  if (t >= j) throw std::invalid_argument("sinr_cross: decoded user must be weaker (t < j)");
  const double g = gain_sorted[j] * power.p_max;
  return g * rho_sorted[t] / (g * detail::residual_power(rho_sorted, t) + power.sigma2);
}

/// SINR_{t->j} >= SINR_{t->t} for every pair t < j.
inline bool check_sic(std::span<const double> gain_sorted, std::span<const double> rho_sorted,
                      const SystemPower& power) {
  const std::size_t k = gain_sorted.size();
  for (std::size_t t = 0; t < k; ++t) {
    const double own = sinr_own(gain_sorted, rho_sorted, power, t);
    for (std::size_t j = t + 1; j < k; ++j)
      if (sinr_cross(gain_sorted, rho_sorted, power, t, j) < own) return false;
  }
  return true;
}

/// Full rate evaluation from unsorted gains. rho_by_position[p] is the power
/// share of whichever user lands at decoding position p.
inline RateReport rate_report(std::span<const double> gain_mag2,
                              std::span<const double> rho_by_position, const SystemPower& power,
                              double r_min) {
  detail::check_sorted_inputs(gain_mag2, rho_by_position);
  const std::size_t k = gain_mag2.size();
  RateReport rep;
  rep.order = decoding_order(gain_mag2);
  std::vector<double> gain_sorted(k);
  for (std::size_t p = 0; p < k; ++p) gain_sorted[p] = gain_mag2[rep.order[p]];

  rep.sinr_own.assign(k, 0.0);
  rep.rate.assign(k, 0.0);
  rep.qos.assign(k, false);
  rep.qos_ok = true;
  for (std::size_t p = 0; p < k; ++p) {
    const std::size_t user = rep.order[p];
    const double s = sinr_own(gain_sorted, rho_by_position, power, p);
    rep.sinr_own[user] = s;
    rep.rate[user] = std::log2(1.0 + s);
    rep.qos[user] = rep.rate[user] >= r_min;
    rep.qos_ok = rep.qos_ok && rep.qos[user];
    rep.sum_rate += rep.rate[user];
  }
  return rep;
}

}  // namespace irsnoma
