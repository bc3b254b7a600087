#pragma once

// Cascaded BS -> IRS -> user channel model: Rician small-scale fading,
// link distances for a UAV-mounted IRS, and the phase-steered effective gain.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace irsnoma {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Area {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(const Point2& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  Point2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  friend bool operator==(const Area&, const Area&) = default;
};

struct NetworkGeometry {
  Point2 bs_xy;
  double bs_height = 20.0;
  Point2 uav_xy{50.0, 0.0};
  double uav_height = 30.0;
  std::vector<Point2> user_xy;
  Area area{45.0, 45.0, 55.0, 55.0};
  double path_loss_exp = 2.0;

  std::size_t users() const { return user_xy.size(); }

  void validate() const {
    if (!(bs_height > 0.0) || !(uav_height > 0.0))
      throw std::invalid_argument("geometry: heights must be positive");
    if (!(path_loss_exp >= 0.0))
      throw std::invalid_argument("geometry: path loss exponent must be non-negative");
    if (!(area.x_min <= area.x_max) || !(area.y_min <= area.y_max))
      throw std::invalid_argument("geometry: malformed service area");
  }
};

/// One realization of the BS->IRS vector g (length N) and the IRS->user matrix
/// h_r (N x K, column k is h_rk). The deterministic (line-of-sight) parts are
/// kept alongside so tests can reason about the Rician decomposition.
struct ChannelRealization {
  CVector g;
  CMatrix h_r;
  CVector g_los;
  CMatrix h_r_los;
  double rician_factor = 0.0;

  Eigen::Index elements() const { return g.size(); }
  Eigen::Index users() const { return h_r.cols(); }

  bool all_finite() const { return g.allFinite() && h_r.allFinite(); }
};

/// Unit-modulus line-of-sight components for a fixed element/user count.
struct LosComponents {
  CVector g;
  CMatrix h_r;
};

struct PhaseShift {
  Vector theta;

  /// Diagonal entries e^{j theta_n}.
  CVector diagonal() const {
    CVector d(theta.size());
    for (Eigen::Index n = 0; n < theta.size(); ++n) d[n] = std::polar(1.0, theta[n]);
    return d;
  }
};

inline double wrap_two_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle, two_pi);
  if (w < 0.0) w += two_pi;
  return w;
}

namespace detail {

inline cplx standard_complex_normal(std::mt19937_64& rng) {
  // CN(0,1): each quadrature has variance 1/2.
  std::normal_distribution<double> half(0.0, std::sqrt(0.5));
  const double re = half(rng);
  const double im = half(rng);
  return {re, im};
}

inline cplx unit_phasor(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  return std::polar(1.0, phase(rng));
}

}  // namespace detail

/// Unit-modulus entries with i.i.d. uniform phases.
inline LosComponents sample_los(Eigen::Index n_elements, Eigen::Index n_users,
                                std::mt19937_64& rng) {
  if (n_elements < 1 || n_users < 1)
    throw std::invalid_argument("sample_los: element and user counts must be positive");
  LosComponents los{CVector(n_elements), CMatrix(n_elements, n_users)};
  for (Eigen::Index n = 0; n < n_elements; ++n) los.g[n] = detail::unit_phasor(rng);
  for (Eigen::Index k = 0; k < n_users; ++k)
    for (Eigen::Index n = 0; n < n_elements; ++n) los.h_r(n, k) = detail::unit_phasor(rng);
  return los;
}

/// G = LoS * sqrt(w_los) + Rayleigh * sqrt(w_nlos), entrywise, for both links.
/// The weights are passed explicitly so the Omega -> infinity limit (1, 0) is
/// representable exactly.
inline ChannelRealization combine_rician(const LosComponents& los, double los_weight,
                                         double nlos_weight, double omega,
                                         std::mt19937_64& rng) {
  const double a = std::sqrt(los_weight);
  const double b = std::sqrt(nlos_weight);
  ChannelRealization ch;
  ch.rician_factor = omega;
  ch.g_los = los.g;
  ch.h_r_los = los.h_r;
  ch.g.resize(los.g.size());
  ch.h_r.resize(los.h_r.rows(), los.h_r.cols());
  for (Eigen::Index n = 0; n < los.g.size(); ++n)
    ch.g[n] = a * los.g[n] + b * detail::standard_complex_normal(rng);
  for (Eigen::Index k = 0; k < los.h_r.cols(); ++k)
    for (Eigen::Index n = 0; n < los.h_r.rows(); ++n)
      ch.h_r(n, k) = a * los.h_r(n, k) + b * detail::standard_complex_normal(rng);
  return ch;
}

inline ChannelRealization sample_rician(const LosComponents& los, double omega,
                                        std::mt19937_64& rng) {
  if (!(omega >= 0.0)) throw std::invalid_argument("sample_rician: omega must be non-negative");
  if (std::isinf(omega)) return combine_rician(los, 1.0, 0.0, omega, rng);
  return combine_rician(los, omega / (omega + 1.0), 1.0 / (omega + 1.0), omega, rng);
}

/// Draws fresh LoS phases and the scattered component from one random source.
inline ChannelRealization sample_rician(Eigen::Index n_elements, Eigen::Index n_users,
                                        double omega, std::mt19937_64& rng) {
  if (n_elements < 1 || n_users < 1)
    throw std::invalid_argument("sample_rician: element and user counts must be positive");
  if (!(omega >= 0.0)) throw std::invalid_argument("sample_rician: omega must be non-negative");
  const LosComponents los = sample_los(n_elements, n_users, rng);
  return sample_rician(los, omega, rng);
}

struct LinkDistances {
  double bs_irs = 0.0;
  Vector irs_user;
};

/// d_BI between the BS mast and the UAV, d_Iu_k from the UAV to ground users.
/// A zero distance means coincident nodes and raises std::domain_error.
inline LinkDistances link_distances(const NetworkGeometry& geom) {
  const double dx = geom.uav_xy.x - geom.bs_xy.x;
  const double dy = geom.uav_xy.y - geom.bs_xy.y;
  const double dh = geom.bs_height - geom.uav_height;
  LinkDistances d;
  d.bs_irs = std::sqrt(dx * dx + dy * dy + dh * dh);
  if (!(d.bs_irs > 0.0)) throw std::domain_error("link_distances: BS and IRS coincide");
  d.irs_user.resize(static_cast<Eigen::Index>(geom.users()));
  for (std::size_t k = 0; k < geom.users(); ++k) {
    const double ux = geom.uav_xy.x - geom.user_xy[k].x;
    const double uy = geom.uav_xy.y - geom.user_xy[k].y;
    const double v = std::sqrt(ux * ux + uy * uy + geom.uav_height * geom.uav_height);
    if (!(v > 0.0)) throw std::domain_error("link_distances: IRS and user coincide");
    d.irs_user[static_cast<Eigen::Index>(k)] = v;
  }
  return d;
}

/// h_rk^H diag(e^{j theta}) g before path loss.
inline cplx cascaded_response(const ChannelRealization& ch, const PhaseShift& phase,
                              Eigen::Index user) {
  if (phase.theta.size() != ch.elements())
    throw std::invalid_argument("effective_gain: phase length does not match element count");
  if (user < 0 || user >= ch.users())
    throw std::invalid_argument("effective_gain: user index out of range");
  cplx acc{0.0, 0.0};
  for (Eigen::Index n = 0; n < ch.elements(); ++n)
    acc += std::conj(ch.h_r(n, user)) * std::polar(1.0, phase.theta[n]) * ch.g[n];
  return acc;
}

/// h_k = h_rk^H Phi g / (d_BI d_Iu_k)^alpha with an explicit exponent, so the
/// caller decides whether path loss attenuates amplitude (alpha) or power
/// (alpha / 2).
inline cplx effective_gain(const ChannelRealization& ch, const PhaseShift& phase,
                           double d_bs_irs, double d_irs_user, double exponent,
                           Eigen::Index user) {
  return cascaded_response(ch, phase, user) / std::pow(d_bs_irs * d_irs_user, exponent);
}

inline cplx effective_gain(const ChannelRealization& ch, const PhaseShift& phase,
                           const NetworkGeometry& geom, Eigen::Index user) {
  if (static_cast<Eigen::Index>(geom.users()) != ch.users())
    throw std::invalid_argument("effective_gain: geometry user count does not match channel");
  const LinkDistances d = link_distances(geom);
  if (user < 0 || user >= d.irs_user.size())
    throw std::invalid_argument("effective_gain: user index out of range");
  return effective_gain(ch, phase, d.bs_irs, d.irs_user[user], geom.path_loss_exp, user);
}

/// Phases that align every cascaded term of one user: theta_n = -arg(h_rk,n^* g_n).
inline PhaseShift co_phasing(const ChannelRealization& ch, Eigen::Index user) {
  PhaseShift p{Vector(ch.elements())};
  for (Eigen::Index n = 0; n < ch.elements(); ++n)
    p.theta[n] = wrap_two_pi(-std::arg(std::conj(ch.h_r(n, user)) * ch.g[n]));
  return p;
}

}  // namespace irsnoma
