#pragma once

// Key-value config files with [sections]. Every field is bound once through
// a visitor so loading, flag overrides and the manifest echo stay in sync.

#include <hll/baseline.hpp>
#include <hll/env.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hll {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Flat `section.key -> value` store.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const { return values_.at(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Later files and overrides win.
  void merge(const KeyValues& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  static KeyValues parse(std::istream& is, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      kv.set(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open config '" + path + "'");
    return parse(in, path);
  }

  /// `section.key=value` as given on the command line.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must be section.key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Value codecs

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "': cannot parse number '" + tok + "'");
    }
    if (used != tok.size()) throw ConfigError("'" + key + "': trailing characters in '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string join(const double* v, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ", ";
    s += fmt_double(v[i]);
  }
  return s;
}

inline void decode(const std::string& key, const std::string& s, double& v) {
  const auto l = parse_list(key, s);
  if (l.size() != 1) throw ConfigError("'" + key + "' expects one number");
  v = l[0];
}
inline std::string encode(double v) { return fmt_double(v); }

inline void decode(const std::string& key, const std::string& s, int& v) {
  double d;
  decode(key, s, d);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError("'" + key + "' expects an integer");
  v = static_cast<int>(d);
}
inline std::string encode(int v) { return std::to_string(v); }

inline void decode(const std::string& key, const std::string& s, std::uint64_t& v) {
  try {
    std::size_t used = 0;
    v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an unsigned integer");
  }
}
inline std::string encode(std::uint64_t v) { return std::to_string(v); }

inline void decode(const std::string& key, const std::string& s, bool& v) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") v = true;
  else if (s == "false" || s == "0" || s == "no" || s == "off") v = false;
  else throw ConfigError("'" + key + "' expects true or false");
}
inline std::string encode(bool v) { return v ? "true" : "false"; }

inline void decode(const std::string&, const std::string& s, std::string& v) { v = s; }
inline std::string encode(const std::string& v) { return v; }

template <int N>
void decode(const std::string& key, const std::string& s, Eigen::Matrix<double, N, 1>& v) {
  const auto l = parse_list(key, s);
  if (static_cast<int>(l.size()) != N) throw ConfigError("'" + key + "' expects " + std::to_string(N) + " numbers");
  for (int i = 0; i < N; ++i) v[i] = l[static_cast<std::size_t>(i)];
}
template <int N>
std::string encode(const Eigen::Matrix<double, N, 1>& v) {
  return join(v.data(), N);
}

/// Three values give a diagonal tensor, nine a full row-major one.
inline void decode(const std::string& key, const std::string& s, Mat3& m) {
  const auto l = parse_list(key, s);
  if (l.size() == 3) {
    m = Vec3(l[0], l[1], l[2]).asDiagonal();
  } else if (l.size() == 9) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = l[static_cast<std::size_t>(3 * r + c)];
  } else {
    throw ConfigError("'" + key + "' expects 3 (diagonal) or 9 numbers");
  }
}
inline std::string encode(const Mat3& m) {
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> r = m;
  return join(r.data(), 9);
}

template <std::size_t N>
void decode(const std::string& key, const std::string& s, std::array<double, N>& v) {
  const auto l = parse_list(key, s);
  if (l.size() != N) throw ConfigError("'" + key + "' expects " + std::to_string(N) + " numbers");
  std::copy(l.begin(), l.end(), v.begin());
}
template <std::size_t N>
std::string encode(const std::array<double, N>& v) {
  return join(v.data(), N);
}

inline void decode(const std::string& key, const std::string& s, std::vector<int>& v) {
  v.clear();
  for (double d : parse_list(key, s)) {
    if (d != std::floor(d) || d < 1) throw ConfigError("'" + key + "' expects positive integers");
    v.push_back(static_cast<int>(d));
  }
}
inline std::string encode(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

/// Wheel script knots as `t:rate, t:rate, ...`.
inline void decode(const std::string& key, const std::string& s, WheelScript& w) {
  w.knots.clear();
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw ConfigError("'" + key + "' knots must be t:rate");
    double t, r;
    decode(key, tok.substr(0, colon), t);
    decode(key, tok.substr(colon + 1), r);
    if (!w.knots.empty() && t < w.knots.back().first) throw ConfigError("'" + key + "' knot times must not decrease");
    w.knots.emplace_back(t, r);
  }
  if (w.knots.empty()) throw ConfigError("'" + key + "' needs at least one knot");
}
inline std::string encode(const WheelScript& w) {
  std::string s;
  for (std::size_t i = 0; i < w.knots.size(); ++i)
    s += (i ? ", " : "") + fmt_double(w.knots[i].first) + ":" + fmt_double(w.knots[i].second);
  return s;
}

inline void decode(const std::string&, const std::string& s, Mode& m) { m = mode_from_string(s); }
inline std::string encode(Mode m) { return to_string(m); }
inline void decode(const std::string&, const std::string& s, TerrainType& t) { t = terrain_type_from_string(s); }
inline std::string encode(TerrainType t) { return to_string(t); }

}  // namespace detail

/// Reads bound fields from a KeyValues store and remembers which keys were used.
class ConfigReader {
 public:
  explicit ConfigReader(const KeyValues& kv) : kv_(kv) {}

  template <typename T>
  void operator()(const std::string& key, T& field) {
    known_.insert(key);
    if (!kv_.has(key)) return;
    detail::decode(key, kv_.get(key), field);
  }

  /// Keys present in the file that no visitor claimed, excluding the given prefixes.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& ignore_prefixes = {}) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_.values()) {
      if (known_.count(k)) continue;
      bool skip = false;
      for (const auto& p : ignore_prefixes) skip = skip || k.rfind(p, 0) == 0;
      if (!skip) out.push_back(k);
    }
    return out;
  }

  void require_all_known(const std::vector<std::string>& ignore_prefixes = {}) const {
    const auto unk = unknown_keys(ignore_prefixes);
    if (unk.empty()) return;
    std::string msg = "unknown config key";
    msg += unk.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unk.size(); ++i) msg += (i ? ", " : "") + unk[i];
    throw ConfigError(msg);
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> known_;
};

/// Serializes bound fields back to sectioned key-value text.
class ConfigWriter {
 public:
  template <typename T>
  void operator()(const std::string& key, const T& field) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    const std::string name = key.substr(dot + 1);
    if (section != section_) {
      if (!section_.empty()) os_ << "\n";
      os_ << "[" << section << "]\n";
      section_ = section;
    }
    os_ << name << " = " << detail::encode(field) << "\n";
  }

  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  std::string section_;
};

// ---------------------------------------------------------------------------
// Field bindings

template <typename V>
void visit_config(V& v, RobotModel& m) {
  InertialParams& in = m.inertial;
  v("robot.mass", in.mass);
  v("robot.inertia", in.inertia);
  v("robot.prop_arm_left", in.prop_arm[0]);
  v("robot.prop_arm_right", in.prop_arm[1]);
  v("robot.wheel_arm_left", in.wheel_arm[0]);
  v("robot.wheel_arm_right", in.wheel_arm[1]);
  v("robot.gravity", in.gravity);
  v("robot.friction", m.friction);

  ContactParams& c = m.contact;
  v("contact.wheel_radius", c.wheel_radius);
  v("contact.stiffness", c.stiffness);
  v("contact.damping", c.damping);
  v("contact.slip_epsilon", c.slip_epsilon);
  v("contact.wheel_inertia", c.wheel_inertia);
  v("contact.wheel_drag", c.wheel_drag);
  v("contact.prop_radius", c.prop_radius);
  v("contact.wall_slope_deg", c.wall_slope_deg);

  v("thrust.coeffs", m.thrust.coeffs);
  v("thrust.scale", m.thrust_scale);
  v("power.prop_coeffs", m.power.prop_coeffs);
  v("power.wheel_coeffs", m.power.wheel_coeffs);

  v("wheel.kp", m.wheel_ctrl.kp);
  v("wheel.ki", m.wheel_ctrl.ki);
  v("wheel.torque_limit", m.wheel_ctrl.torque_limit);
  v("wheel.rate_limit", m.wheel_ctrl.rate_limit);

  v("servo.natural_freq", m.servo.natural_freq);
  v("servo.damping", m.servo.damping);
  v("servo.rate_limit", m.servo.rate_limit);
  v("servo.angle_limit", m.servo.angle_limit);
  v("servo.delay_steps", m.servo.delay_steps);

  v("prop.time_constant", m.prop.time_constant);
  v("prop.yaw_drag", m.prop.yaw_drag);
}

template <typename V>
void visit_config(V& v, TerrainSpec& t) {
  v("terrain.type", t.type);
  v("terrain.tile_size", t.tile_size);
  v("terrain.border", t.border);
  v("terrain.step_width", t.step_width);
  v("terrain.platform_width", t.platform_width);
  v("terrain.difficulty", t.difficulty);
  v("terrain.difficulty_min", t.difficulty_min);
  v("terrain.difficulty_max", t.difficulty_max);
  v("terrain.height_at_min", t.height_at_min);
  v("terrain.height_at_max", t.height_at_max);
  v("terrain.step_height", t.step_height_override);
  v("terrain.rings", t.rings);
  v("terrain.friction", t.friction);
  v("terrain.resolution", t.resolution);
  v("terrain.roughness", t.roughness);
  v("terrain.roughness_wavelength", t.roughness_wavelength);
  v("terrain.seed", t.seed);
}

template <typename V>
void visit_config(V& v, EnvConfig& c) {
  visit_config(v, c.robot);
  visit_config(v, c.terrain);
  v("terrain.random_difficulty", c.random_difficulty);
  v("terrain.file", c.terrain_file);

  v("spawn.platform_margin", c.spawn.platform_margin);
  v("spawn.tile_margin", c.spawn.tile_margin);
  v("spawn.yaw_range", c.spawn.yaw_range);
  v("spawn.require_off_platform", c.spawn.require_off_platform);
  v("spawn.off_platform_clearance", c.spawn.off_platform_clearance);
  v("spawn.max_attempts", c.spawn.max_attempts);
  v("curriculum.min_dist", c.curriculum_min_dist);
  v("curriculum.max_cap", c.curriculum_max_cap);

  RewardParams& r = c.reward;
  v("reward.w_align", r.w_align);
  v("reward.w_target", r.w_target);
  v("reward.w_energy", r.w_energy);
  v("reward.w_heading", r.w_heading);
  v("reward.w_tilt", r.w_tilt);
  v("reward.w_speed", r.w_speed);
  v("reward.w_term", r.w_term);
  v("reward.v_ref", r.v_ref);
  v("reward.e_ref", r.e_ref);
  v("reward.v_max", r.v_max);
  v("reward.k_pitch", r.k_pitch);
  v("reward.k_roll", r.k_roll);
  v("reward.goal_reward", r.goal_reward);
  v("reward.failure_penalty", r.failure_penalty);

  v("termination.goal_tolerance", c.termination.goal_tolerance);
  v("termination.z_limit", c.termination.z_limit);
  v("termination.xy_limit", c.termination.xy_limit);

  v("randomization.mass", c.randomization.mass);
  v("randomization.inertia", c.randomization.inertia);
  v("randomization.friction", c.randomization.friction);
  v("randomization.thrust", c.randomization.thrust);
  v("randomization.servo_rate", c.randomization.servo_rate);
  v("randomization.roughness", c.randomization.roughness);

  v("observation.wheel_rate_scale", c.scales.wheel_rate);
  v("observation.lin_vel_scale", c.scales.lin_vel);
  v("observation.ang_vel_scale", c.scales.ang_vel);
  v("observation.history", c.history);
  v("observation.scan_spacing", c.scan_spacing);
  v("observation.scan_range", c.scan_range);

  v("env.mode", c.mode);
  v("env.dt", c.dt);
  v("env.decimation", c.decimation);
  v("env.timeout_steps", c.timeout_steps);
  v("env.sigma_goal_floor", c.sigma_goal_floor);
  v("env.realized_wheel_power", c.realized_wheel_power);
}

template <typename V>
void visit_config(V& v, DecoupledConfig& d) {
  v("decoupled.name", d.name);
  v("decoupled.pitch_ref", d.pitch_ref);
  v("decoupled.hold_pwm", d.hold_pwm);
  v("decoupled.kp", d.kp);
  v("decoupled.ki", d.ki);
  v("decoupled.kd", d.kd);
  v("decoupled.integral_limit", d.integral_limit);
  v("decoupled.output_limit", d.output_limit);
  v("decoupled.tilt_bias", d.tilt_bias);
  v("decoupled.script", d.script);
}

/// Sections that only carry documentation and are never bound to fields.
inline const std::vector<std::string> kFreeformPrefixes{"meta."};

inline EnvConfig env_config_from(const KeyValues& kv) {
  EnvConfig c;
  ConfigReader r(kv);
  visit_config(r, c);
  c.validate();
  return c;
}

template <typename T>
std::string config_echo(const T& value) {
  T copy = value;
  ConfigWriter w;
  visit_config(w, copy);
  return w.str();
}

}  // namespace hll
