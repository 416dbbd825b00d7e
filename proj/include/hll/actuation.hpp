#pragma once

// Actuator models: propeller rate -> PWM -> thrust/power maps, the wheel PI
// speed loop and the delayed servo position loop.

#include <hll/core.hpp>

#include <algorithm>
#include <array>
#include <span>
#include <vector>

namespace hll {

inline constexpr double kPwmMin = 1000.0;   ///< us, idle
inline constexpr double kPwmMax = 2000.0;   ///< us, saturation
inline constexpr double kPropRateMax = 500.0;   ///< rad/s
inline constexpr double kWheelRateMax = 500.0;  ///< rad/s
inline constexpr double kRadPerSecToRpm = 60.0 / (2.0 * kPi);

/// |omega_p| -> equivalent ESC signal, clip(1000 + 2|w|, 1000, 2000) us.
inline double omega_to_pwm(double prop_rate) {
  return clamp(kPwmMin + 2.0 * std::abs(prop_rate), kPwmMin, kPwmMax);
}

/// Inverse on the unsaturated branch; returns the rate magnitude.
inline double pwm_to_omega(double pwm) { return (clamp(pwm, kPwmMin, kPwmMax) - kPwmMin) / 2.0; }

/// Horner evaluation, coefficients highest order first.
template <std::size_t N>
double polyval(const std::array<double, N>& c, double x) {
  double acc = 0.0;
  for (double ck : c) acc = acc * x + ck;
  return acc;
}

template <std::size_t N>
double polyder(const std::array<double, N>& c, double x) {
  double acc = 0.0;
  const std::size_t deg = N - 1;
  for (std::size_t k = 0; k < deg; ++k) acc = acc * x + c[k] * static_cast<double>(deg - k);
  return acc;
}

/// Degree-4 thrust polynomial in raw PWM microseconds.
struct ThrustMap {
  std::array<double, 5> coeffs{0.0, 6.0e-9, -8.0e-6, -2.0e-3, 4.0};  ///< N / us^k, highest first
  double pwm_min = kPwmMin;
  double pwm_max = kPwmMax;

  double raw(double pwm) const { return polyval(coeffs, pwm); }

  /// Dense 1 us scan: zero at idle, nonnegative, nondecreasing.
  void validate() const {
    for (double c : coeffs)
      if (!std::isfinite(c)) throw InvalidMap("thrust map has non-finite coefficients");
    if (std::abs(raw(pwm_min)) > 1e-6) throw InvalidMap("thrust at idle PWM must be zero");
    double prev = -1e-9;
    for (double u = pwm_min; u <= pwm_max; u += 1.0) {
      const double f = raw(u);
      if (f < -1e-6) throw InvalidMap("thrust map negative at " + std::to_string(u) + " us");
      if (f < prev - 1e-9) throw InvalidMap("thrust map decreasing at " + std::to_string(u) + " us");
      prev = f;
    }
  }
};

inline double pwm_to_thrust(double pwm, const ThrustMap& map) {
  return std::max(0.0, map.raw(clamp(pwm, map.pwm_min, map.pwm_max)));
}

/// Electrical power maps: propeller power in PWM (degree 4), wheel power in
/// RPM (degree 2). Coefficients highest order first.
struct PowerModel {
  std::array<double, 5> prop_coeffs{0.0, 2.5e-7, -7.5e-4, 0.77, -270.0};  ///< W / us^k
  std::array<double, 3> wheel_coeffs{1.0e-6, 4.0e-3, 0.0};               ///< W / rpm^k
  double rpm_max = kWheelRateMax * kRadPerSecToRpm;

  double prop_power(double pwm) const {
    return std::max(0.0, polyval(prop_coeffs, clamp(pwm, kPwmMin, kPwmMax)));
  }
  double wheel_power(double rpm) const {
    return std::max(0.0, polyval(wheel_coeffs, clamp(std::abs(rpm), 0.0, rpm_max)));
  }

  void validate() const {
    double prev = -1e-9;
    for (double u = kPwmMin; u <= kPwmMax; u += 1.0) {
      const double p = polyval(prop_coeffs, u);
      if (!std::isfinite(p) || p < -1e-9 || p < prev - 1e-9)
        throw InvalidMap("propeller power map must be nonnegative and nondecreasing");
      prev = p;
    }
    prev = -1e-9;
    for (double r = 0.0; r <= rpm_max; r += 1.0) {
      const double p = polyval(wheel_coeffs, r);
      if (!std::isfinite(p) || p < -1e-9 || p < prev - 1e-9)
        throw InvalidMap("wheel power map must be nonnegative and nondecreasing");
      prev = p;
    }
  }
};

/// Low-level command u_t: propeller PWM, wheel speed references, servo tilt references.
struct ActuatorCommand {
  Vec2 pwm_prop = Vec2::Constant(kPwmMin);
  Vec2 wheel_rate_ref = Vec2::Zero();
  Vec2 servo_angle_ref = Vec2::Zero();

  ActuatorCommand clamped() const {
    ActuatorCommand c;
    for (int i = 0; i < 2; ++i) {
      c.pwm_prop[i] = clamp(pwm_prop[i], kPwmMin, kPwmMax);
      c.wheel_rate_ref[i] = clamp(wheel_rate_ref[i], -kWheelRateMax, kWheelRateMax);
      c.servo_angle_ref[i] = clamp(servo_angle_ref[i], -kPi / 2.0, kPi / 2.0);
    }
    return c;
  }
};

struct PowerSplit {
  double prop = 0.0;   ///< W
  double wheel = 0.0;  ///< W
  double total() const { return prop + wheel; }
};

/// Electrical power drawn by a command. Wheel power uses the commanded rate.
inline PowerSplit electrical_power(const ActuatorCommand& cmd, const PowerModel& model) {
  PowerSplit p;
  p.prop = model.prop_power(cmd.pwm_prop[0]) + model.prop_power(cmd.pwm_prop[1]);
  p.wheel = model.wheel_power(kRadPerSecToRpm * std::abs(cmd.wheel_rate_ref[0])) +
            model.wheel_power(kRadPerSecToRpm * std::abs(cmd.wheel_rate_ref[1]));
  return p;
}

// ---------------------------------------------------------------------------
// Wheel speed loop

struct WheelController {
  double kp = 0.008;            ///< N m s / rad
  double ki = 0.3;              ///< N m / rad
  double torque_limit = 0.06;   ///< N m
  double rate_limit = 3.0;      ///< N m / s
  Vec2 integral = Vec2::Zero();
  Vec2 last_torque = Vec2::Zero();

  void reset() {
    integral.setZero();
    last_torque.setZero();
  }
};

/// One PI update for wheel `i`: M = kp e + ki int(e), anti-windup on the
/// integral, saturation and slew limiting on the output.
inline double wheel_pi_step(double error, WheelController& ctrl, int i, double dt) {
  double& integ = ctrl.integral[i];
  integ += error * dt;
  if (ctrl.ki > 0.0) {
    const double cap = ctrl.torque_limit / ctrl.ki;
    integ = clamp(integ, -cap, cap);
  }
  double torque = ctrl.kp * error + ctrl.ki * integ;
  torque = clamp(torque, -ctrl.torque_limit, ctrl.torque_limit);
  const double max_delta = ctrl.rate_limit * dt;
  torque = clamp(torque, ctrl.last_torque[i] - max_delta, ctrl.last_torque[i] + max_delta);
  ctrl.last_torque[i] = torque;
  return torque;
}

inline Vec2 wheel_pi_step(const Vec2& error, WheelController& ctrl, double dt) {
  return Vec2(wheel_pi_step(error[0], ctrl, 0, dt), wheel_pi_step(error[1], ctrl, 1, dt));
}

// ---------------------------------------------------------------------------
// Servo position loop

/// Delayed second-order (PD-equivalent) tilt servo. Critically damped by
/// default, so a step reference is approached without overshoot; with the
/// defaults a 1 rad step settles to within 5% in 0.150 s (0.145 s without the delay).
struct ServoModel {
  double natural_freq = 40.0;  ///< rad/s
  double damping = 1.0;
  double rate_limit = 10.0;    ///< rad/s
  double angle_limit = kPi / 2.0;
  int delay_steps = 1;         ///< physics steps
};

inline constexpr int kMaxServoDelay = 16;

struct ServoState {
  double angle = 0.0;
  double rate = 0.0;
  std::array<double, kMaxServoDelay> queue{};
  int head = 0;

  void reset(double angle0 = 0.0) {
    angle = angle0;
    rate = 0.0;
    queue.fill(angle0);
    head = 0;
  }
};

inline double servo_track_step(double reference, const ServoModel& model, ServoState& st, double dt) {
  const int delay = std::clamp(model.delay_steps, 0, kMaxServoDelay);
  double target = reference;
  if (delay > 0) {
    target = st.queue[st.head];
    st.queue[st.head] = reference;
    st.head = (st.head + 1) % delay;
  }
  target = clamp(target, -model.angle_limit, model.angle_limit);
  const double wn = model.natural_freq;
  const double accel = wn * wn * (target - st.angle) - 2.0 * model.damping * wn * st.rate;
  st.rate = clamp(st.rate + dt * accel, -model.rate_limit, model.rate_limit);
  st.angle += dt * st.rate;
  if (st.angle > model.angle_limit || st.angle < -model.angle_limit) {
    st.angle = clamp(st.angle, -model.angle_limit, model.angle_limit);
    st.rate = 0.0;
  }
  return st.angle;
}

// ---------------------------------------------------------------------------
// Propeller spin-up

/// First-order lag between the commanded and realized rotor rate.
struct PropellerModel {
  double time_constant = 0.05;  ///< s
  double yaw_drag = 0.0;        ///< N m per (rad/s)^2; 0 disables the reaction-torque term
};

inline double prop_lag_step(double rate, double target, const PropellerModel& model, double dt) {
  const double alpha = std::min(1.0, dt / model.time_constant);
  return clamp(rate + alpha * (target - rate), -kPropRateMax, kPropRateMax);
}

// ---------------------------------------------------------------------------
// Bench calibration fits

struct Sample {
  double x = 0.0;
  double y = 0.0;
};

struct PolyFit {
  std::vector<double> coeffs;  ///< in the raw input unit, highest order first
  double rmse = 0.0;
  std::size_t samples = 0;
};

namespace detail {

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double bernstein(int n, int k, double t) {
  return binom(n, k) * std::pow(t, k) * std::pow(1.0 - t, n - k);
}

/// Lawson-Hanson nonnegative least squares: min |A x - b|, x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter = 200) {
  const int n = static_cast<int>(a.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff());

  auto solve_passive = [&]() {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    if (idx.empty()) return s;
    Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) ap.col(static_cast<Eigen::Index>(c)) = a.col(idx[c]);
    const Eigen::VectorXd sp = ap.colPivHouseholderQr().solve(b);
    for (std::size_t c = 0; c < idx.size(); ++c) s[idx[c]] = sp[static_cast<Eigen::Index>(c)];
    return s;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    int best = -1;
    double wmax = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && w[j] > wmax) {
        wmax = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < max_iter; ++inner) {
      Eigen::VectorXd s = solve_passive();
      bool feasible = true;
      for (int j = 0; j < n; ++j)
        if (passive[j] && s[j] <= 0.0) feasible = false;
      if (feasible) {
        x = s;
        break;
      }
      double alpha = 1.0;
      for (int j = 0; j < n; ++j)
        if (passive[j] && s[j] <= 0.0) alpha = std::min(alpha, x[j] / (x[j] - s[j]));
      x += alpha * (s - x);
      for (int j = 0; j < n; ++j)
        if (passive[j] && x[j] <= 1e-15) {
          passive[j] = false;
          x[j] = 0.0;
        }
    }
  }
  return x;
}

}  // namespace detail

/// Least-squares polynomial of `degree` on [lo, hi] constrained to be
/// nondecreasing (monotone Bernstein coefficients). With `zero_at_lo` the
/// value at `lo` is pinned to zero; otherwise it is constrained nonnegative.
inline PolyFit fit_monotone_polynomial(std::span<const Sample> samples, double lo, double hi,
                                       int degree, bool zero_at_lo) {
  const std::size_t min_samples = 10;
  if (samples.size() < min_samples)
    throw FitFailed("need at least " + std::to_string(min_samples) + " samples, got " +
                    std::to_string(samples.size()));
  double smin = std::numeric_limits<double>::infinity();
  double smax = -smin;
  for (const Sample& s : samples) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y)) throw FitFailed("non-finite bench sample");
    if (s.x < lo - 1e-9 || s.x > hi + 1e-9) throw FitFailed("bench sample outside fit range");
    smin = std::min(smin, s.x);
    smax = std::max(smax, s.x);
  }
  const double span = hi - lo;
  if (smin > lo + 0.1 * span || smax < hi - 0.1 * span)
    throw FitFailed("bench samples do not span the operating range");

  // Columns: optional offset, then cumulative Bernstein sums G_j = sum_{k>=j} B_k.
  const int first = zero_at_lo ? 1 : 0;
  const int ncols = degree + 1 - first;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(samples.size()), ncols);
  Eigen::VectorXd b(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const double t = (samples[r].x - lo) / span;
    b[static_cast<Eigen::Index>(r)] = samples[r].y;
    for (int j = first; j <= degree; ++j) {
      double g = 0.0;
      for (int k = j; k <= degree; ++k) g += detail::bernstein(degree, k, t);
      a(static_cast<Eigen::Index>(r), j - first) = g;
    }
  }
  const Eigen::VectorXd delta = detail::nnls(a, b);
  if (!delta.allFinite()) throw FitFailed("constrained fit diverged");
  if (delta.maxCoeff() <= 0.0) throw FitFailed("constrained fit infeasible: data not increasing");

  std::vector<double> bez(static_cast<std::size_t>(degree + 1), 0.0);
  double acc = 0.0;
  for (int k = 0; k <= degree; ++k) {
    if (k >= first) acc += delta[k - first];
    bez[static_cast<std::size_t>(k)] = acc;
  }

  // Bernstein -> monomials in t (lowest first).
  std::vector<double> mt(static_cast<std::size_t>(degree + 1), 0.0);
  for (int k = 0; k <= degree; ++k)
    for (int i = k; i <= degree; ++i)
      mt[static_cast<std::size_t>(i)] += bez[static_cast<std::size_t>(k)] * detail::binom(degree, k) *
                                         detail::binom(degree - k, i - k) * ((i - k) % 2 ? -1.0 : 1.0);
  // t = (x - lo) / span -> monomials in x (lowest first).
  std::vector<double> mx(static_cast<std::size_t>(degree + 1), 0.0);
  for (int i = 0; i <= degree; ++i)
    for (int j = 0; j <= i; ++j)
      mx[static_cast<std::size_t>(j)] += mt[static_cast<std::size_t>(i)] * detail::binom(i, j) *
                                         std::pow(-lo, i - j) / std::pow(span, i);

  PolyFit fit;
  fit.coeffs.assign(mx.rbegin(), mx.rend());
  fit.samples = samples.size();
  double sse = 0.0;
  for (const Sample& s : samples) {
    const double t = (s.x - lo) / span;
    double pred = 0.0;
    for (int k = 0; k <= degree; ++k) pred += bez[static_cast<std::size_t>(k)] * detail::bernstein(degree, k, t);
    sse += (pred - s.y) * (pred - s.y);
  }
  fit.rmse = std::sqrt(sse / static_cast<double>(samples.size()));
  return fit;
}

struct ThrustFit {
  ThrustMap map;
  double rmse = 0.0;
  std::size_t samples = 0;
};

/// Degree-4 thrust fit from (pwm us, thrust N) bench samples, zero at idle
/// and monotone over [1000, 2000] us.
inline ThrustFit fit_thrust_map(std::span<const Sample> bench) {
  const PolyFit pf = fit_monotone_polynomial(bench, kPwmMin, kPwmMax, 4, true);
  ThrustFit out;
  std::copy(pf.coeffs.begin(), pf.coeffs.end(), out.map.coeffs.begin());
  // Expansion round-off can leave a residue at idle; absorb it in the constant term.
  out.map.coeffs[4] -= out.map.raw(kPwmMin);
  out.rmse = pf.rmse;
  out.samples = pf.samples;
  out.map.validate();
  return out;
}

/// Degree-4 propeller power fit (W vs us) and degree-2 wheel power fit
/// (W vs rpm), both zero at rest and nondecreasing.
struct PowerFit {
  PowerModel model;
  double prop_rmse = std::numeric_limits<double>::quiet_NaN();
  double wheel_rmse = std::numeric_limits<double>::quiet_NaN();
};

inline PowerFit fit_power_model(std::span<const Sample> prop_bench, std::span<const Sample> wheel_bench,
                                const PowerModel& base = {}) {
  PowerFit out;
  out.model = base;
  if (!prop_bench.empty()) {
    const PolyFit pf = fit_monotone_polynomial(prop_bench, kPwmMin, kPwmMax, 4, true);
    std::copy(pf.coeffs.begin(), pf.coeffs.end(), out.model.prop_coeffs.begin());
    out.model.prop_coeffs[4] -= polyval(out.model.prop_coeffs, kPwmMin);
    out.prop_rmse = pf.rmse;
  }
  if (!wheel_bench.empty()) {
    const PolyFit pf = fit_monotone_polynomial(wheel_bench, 0.0, base.rpm_max, 2, true);
    std::copy(pf.coeffs.begin(), pf.coeffs.end(), out.model.wheel_coeffs.begin());
    out.model.wheel_coeffs[2] = 0.0;
    out.wheel_rmse = pf.rmse;
  }
  out.model.validate();
  return out;
}

/// Evenly spaced bench readings of `truth` over [lo, hi] with additive
/// Gaussian noise, for exercising the fits without hardware.
template <typename F>
std::vector<Sample> synthetic_bench(F&& truth, double lo, double hi, int n, double noise_sd, std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic bench needs at least two samples");
  Rng rng(seed);
  std::vector<Sample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    out[static_cast<std::size_t>(i)] = Sample{x, truth(x) + noise_sd * rng.normal()};
  }
  return out;
}

}  // namespace hll
