#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fym::flowmatch {

/// a_t, b_t, their derivatives, the log-SNR lambda_t = ln(a_t^2 / b_t^2) and its derivative.
struct ScheduleValues {
  double a = 0.0;
  double b = 0.0;
  double da = 0.0;
  double db = 0.0;
  double lambda = 0.0;
  double dlambda = 0.0;
};

/// Rectified-flow schedule a_t = 1 - t, b_t = t on the clamped domain [t_min, 1 - t_min].
class CfmSchedule {
 public:
  explicit CfmSchedule(double t_min = 1e-3) : t_min_(t_min) {
    if (!(t_min > 0.0 && t_min < 0.5)) throw std::invalid_argument("schedule: t_min must lie in (0, 0.5)");
  }

  double t_min() const noexcept { return t_min_; }
  double t_max() const noexcept { return 1.0 - t_min_; }

  void check(double t) const {
    if (!(t >= t_min_ && t <= 1.0 - t_min_)) {
      throw std::invalid_argument("schedule: t=" + std::to_string(t) + " outside [" + std::to_string(t_min_) + ", " +
                                  std::to_string(1.0 - t_min_) + "]");
    }
  }

  ScheduleValues eval(double t) const {
    check(t);
    ScheduleValues s;
    s.a = 1.0 - t;
    s.b = t;
    s.da = -1.0;
    s.db = 1.0;
    s.lambda = 2.0 * (std::log(1.0 - t) - std::log(t));
    s.dlambda = -2.0 / (1.0 - t) - 2.0 / t;
    return s;
  }

  /// (-b_t lambda'_t / 2)^2.
  double loss_weight(double t) const {
    const ScheduleValues s = eval(t);
    const double w = -s.b * s.dlambda / 2.0;
    return w * w;
  }

  /// Coefficients (c_v, c_z) with eps = c_v * v + c_z * z, from
  /// eps := -2 / (lambda'_t b_t) * (v - a'_t / a_t * z).
  std::pair<double, double> eps_coefficients(double t) const {
    const ScheduleValues s = eval(t);
    if (s.b == 0.0 || s.dlambda == 0.0 || s.a == 0.0) throw std::invalid_argument("schedule: degenerate coefficients");
    const double cv = -2.0 / (s.dlambda * s.b);
    return {cv, -cv * s.da / s.a};
  }

 private:
  double t_min_;
};

namespace detail {
inline void same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}
}  // namespace detail

/// z = a_t x0 + b_t eps.
inline std::vector<double> noisy_sample(const CfmSchedule& s, std::span<const double> x0, std::span<const double> eps,
                                        double t) {
  detail::same_size(x0, eps, "noisy_sample");
  const ScheduleValues v = s.eval(t);
  std::vector<double> z(x0.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = v.a * x0[i] + v.b * eps[i];
  return z;
}

/// u_t = a'_t x0 + b'_t eps (eps - x0 for rectified flow).
inline std::vector<double> velocity_target(const CfmSchedule& s, std::span<const double> x0,
                                           std::span<const double> eps, double t) {
  detail::same_size(x0, eps, "velocity_target");
  const ScheduleValues v = s.eval(t);
  std::vector<double> u(x0.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = v.da * x0[i] + v.db * eps[i];
  return u;
}

inline std::vector<double> eps_from_velocity(const CfmSchedule& s, std::span<const double> velocity,
                                             std::span<const double> z, double t) {
  detail::same_size(velocity, z, "eps_from_velocity");
  const auto [cv, cz] = s.eps_coefficients(t);
  std::vector<double> eps(z.size());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = cv * velocity[i] + cz * z[i];
  return eps;
}

}  // namespace fym::flowmatch
