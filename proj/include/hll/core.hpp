#pragma once

// Common math aliases, error types and the deterministic random source used
// everywhere in the simulator.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hll {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

enum class ErrorKind {
  kNonFiniteState,
  kInvalidMap,
  kFitFailed,
  kInvalidSpec,
  kSamplingFailed,
  kConfig,
  kMissingArtifact,
  kNonFiniteGradient,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define HLL_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

HLL_DEFINE_ERROR(NonFiniteState, kNonFiniteState)
HLL_DEFINE_ERROR(InvalidMap, kInvalidMap)
HLL_DEFINE_ERROR(FitFailed, kFitFailed)
HLL_DEFINE_ERROR(InvalidSpec, kInvalidSpec)
HLL_DEFINE_ERROR(SamplingFailed, kSamplingFailed)
HLL_DEFINE_ERROR(ConfigError, kConfig)
HLL_DEFINE_ERROR(MissingArtifact, kMissingArtifact)
HLL_DEFINE_ERROR(NonFiniteGradient, kNonFiniteGradient)

#undef HLL_DEFINE_ERROR

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

/// Z-Y-X (yaw, pitch, roll) angles of a body->world rotation. Pitch is the
/// body-y Euler angle: positive pitch rotates the body +x axis downward.
struct EulerZYX {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

inline EulerZYX euler_zyx(const Mat3& r) {
  EulerZYX e;
  e.pitch = std::asin(clamp(-r(2, 0), -1.0, 1.0));
  e.yaw = std::atan2(r(1, 0), r(0, 0));
  e.roll = std::atan2(r(2, 1), r(2, 2));
  return e;
}

inline Mat3 from_euler_zyx(double yaw, double pitch, double roll) {
  return rot_z(yaw) * rot_y(pitch) * rot_x(roll);
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// SplitMix64 finalizer; used to derive independent per-environment streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for environment `index` derived from a master seed: seed XOR hash(index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return master ^ splitmix64(index);
}

/// Random source with platform-independent transforms. std::mt19937_64 output
/// is fixed by the standard; the distributions in <random> are not, so the
/// uniform and normal transforms are written out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  void seed(std::uint64_t s) { engine_.seed(s); has_spare_ = false; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Engine and Box-Muller spare as text, for checkpoint resume.
  std::string state() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::hexfloat << spare_;
    return os.str();
  }

  void set_state(const std::string& text) {
    std::istringstream is(text);
    int spare_flag = 0;
    std::string spare;
    is >> engine_ >> spare_flag >> spare;
    if (!is) throw ConfigError("malformed random generator state");
    has_spare_ = spare_flag != 0;
    spare_ = std::strtod(spare.c_str(), nullptr);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hll
