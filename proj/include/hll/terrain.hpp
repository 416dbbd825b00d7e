#pragma once

// Inverted-pyramid stair terrain, micro-roughness, height queries and the
// spawn/target curriculum sampler.

#include <hll/core.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace hll {

enum class TerrainType { kInvertedPyramid, kSingleStep, kFlat };

inline const char* to_string(TerrainType t) {
  switch (t) {
    case TerrainType::kInvertedPyramid: return "pyramid";
    case TerrainType::kSingleStep: return "single_step";
    case TerrainType::kFlat: return "flat";
  }
  return "pyramid";
}

inline TerrainType terrain_type_from_string(const std::string& s) {
  if (s == "pyramid" || s == "inverted_pyramid") return TerrainType::kInvertedPyramid;
  if (s == "single_step" || s == "step") return TerrainType::kSingleStep;
  if (s == "flat") return TerrainType::kFlat;
  throw InvalidSpec("unknown terrain type '" + s + "'");
}

struct TerrainSpec {
  TerrainType type = TerrainType::kInvertedPyramid;
  double tile_size = 10.0;       ///< m
  double border = 2.0;           ///< m
  double step_width = 0.40;      ///< m
  double platform_width = 4.0;   ///< m
  double difficulty = 0.5;
  double difficulty_min = 0.01;
  double difficulty_max = 0.70;
  double height_at_min = 0.01;   ///< m
  double height_at_max = 0.126;  ///< m
  double step_height_override = -1.0;  ///< m; >= 0 replaces the difficulty interpolation
  int rings = 0;                 ///< 0 fills the annulus between platform and tile edge
  double friction = 0.8;
  double resolution = 0.05;      ///< m
  double roughness = 0.0;        ///< m
  double roughness_wavelength = 0.2;  ///< m, lattice spacing of the bump noise
  std::uint64_t seed = 0;

  void validate() const {
    if (!(resolution > 0.0)) throw InvalidSpec("cell resolution must be positive");
    if (!(tile_size > 0.0) || border < 0.0) throw InvalidSpec("tile size must be positive");
    if (!(step_width > 0.0)) throw InvalidSpec("step width must be positive");
    if (platform_width < 0.0 || platform_width > tile_size)
      throw InvalidSpec("platform wider than tile");
    if (difficulty < difficulty_min - 1e-12 || difficulty > difficulty_max + 1e-12)
      throw InvalidSpec("difficulty outside [" + std::to_string(difficulty_min) + ", " +
                        std::to_string(difficulty_max) + "]");
    if (rings < 0) throw InvalidSpec("ring count must be nonnegative");
    if (type == TerrainType::kInvertedPyramid && rings > 0 &&
        platform_width + 2.0 * rings * step_width > tile_size + 1e-9)
      throw InvalidSpec("platform plus stair rings exceed the tile");
    if (roughness < 0.0) throw InvalidSpec("roughness amplitude must be nonnegative");
    if (!(friction > 0.0)) throw InvalidSpec("friction must be positive");
  }

  /// Step height, linear in difficulty between the two endpoint configurations.
  double step_height() const {
    if (step_height_override >= 0.0) return step_height_override;
    return height_at_min + (difficulty - difficulty_min) * (height_at_max - height_at_min) /
                               (difficulty_max - difficulty_min);
  }

  int ring_count() const {
    switch (type) {
      case TerrainType::kFlat: return 0;
      case TerrainType::kSingleStep: return 1;
      case TerrainType::kInvertedPyramid:
        if (rings > 0) return rings;
        return static_cast<int>(std::floor(0.5 * (tile_size - platform_width) / step_width + 1e-9));
    }
    return 0;
  }

  double max_elevation() const { return ring_count() * step_height(); }
};

struct HeightSample {
  double height = 0.0;
  Vec3 normal = Vec3::UnitZ();
  bool out_of_bounds = false;
};

/// Row-major grid of heights at nodes origin + (ix, iy) * resolution.
class HeightField {
 public:
  HeightField() = default;
  HeightField(Vec2 origin, double resolution, int nx, int ny)
      : origin_(origin), resolution_(resolution), nx_(nx), ny_(ny),
        heights_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0.0) {
    if (nx < 2 || ny < 2 || !(resolution > 0.0)) throw InvalidSpec("height field needs at least 2x2 nodes");
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }
  Vec2 extent_max() const { return origin_ + Vec2((nx_ - 1) * resolution_, (ny_ - 1) * resolution_); }

  double& at(int ix, int iy) { return heights_[static_cast<std::size_t>(iy) * nx_ + ix]; }
  double at(int ix, int iy) const { return heights_[static_cast<std::size_t>(iy) * nx_ + ix]; }
  Vec2 node(int ix, int iy) const { return origin_ + Vec2(ix * resolution_, iy * resolution_); }

  const std::vector<double>& data() const { return heights_; }
  std::vector<double>& data() { return heights_; }

  bool contains(const Vec2& xy) const {
    const Vec2 hi = extent_max();
    return xy.x() >= origin_.x() && xy.y() >= origin_.y() && xy.x() <= hi.x() && xy.y() <= hi.y();
  }

  /// Bilinear height; positions outside the grid clamp to the edge.
  double height(const Vec2& xy) const {
    double fx = snap((xy.x() - origin_.x()) / resolution_);
    double fy = snap((xy.y() - origin_.y()) / resolution_);
    fx = clamp(fx, 0.0, static_cast<double>(nx_ - 1));
    fy = clamp(fy, 0.0, static_cast<double>(ny_ - 1));
    int ix = std::min(static_cast<int>(fx), nx_ - 2);
    int iy = std::min(static_cast<int>(fy), ny_ - 2);
    const double tx = fx - ix;
    const double ty = fy - iy;
    const double h00 = at(ix, iy), h10 = at(ix + 1, iy);
    const double h01 = at(ix, iy + 1), h11 = at(ix + 1, iy + 1);
    return (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11);
  }

  /// Bilinear height and its in-cell gradient.
  double height_gradient(const Vec2& xy, Vec2& grad) const {
    double fx = snap((xy.x() - origin_.x()) / resolution_);
    double fy = snap((xy.y() - origin_.y()) / resolution_);
    const bool clamp_x = fx < 0.0 || fx > nx_ - 1;
    const bool clamp_y = fy < 0.0 || fy > ny_ - 1;
    fx = clamp(fx, 0.0, static_cast<double>(nx_ - 1));
    fy = clamp(fy, 0.0, static_cast<double>(ny_ - 1));
    int ix = std::min(static_cast<int>(fx), nx_ - 2);
    int iy = std::min(static_cast<int>(fy), ny_ - 2);
    const double tx = fx - ix;
    const double ty = fy - iy;
    const double h00 = at(ix, iy), h10 = at(ix + 1, iy);
    const double h01 = at(ix, iy + 1), h11 = at(ix + 1, iy + 1);
    grad.x() = clamp_x ? 0.0 : ((1.0 - ty) * (h10 - h00) + ty * (h11 - h01)) / resolution_;
    grad.y() = clamp_y ? 0.0 : ((1.0 - tx) * (h01 - h00) + tx * (h11 - h10)) / resolution_;
    return (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11);
  }

  /// Height plus central-difference normal.
  HeightSample sample(const Vec2& xy) const {
    HeightSample s;
    s.out_of_bounds = !contains(xy);
    s.height = height(xy);
    const double e = 0.5 * resolution_;
    const double dhdx = (height(xy + Vec2(e, 0.0)) - height(xy - Vec2(e, 0.0))) / (2.0 * e);
    const double dhdy = (height(xy + Vec2(0.0, e)) - height(xy - Vec2(0.0, e))) / (2.0 * e);
    s.normal = Vec3(-dhdx, -dhdy, 1.0).normalized();
    return s;
  }

  double max_height() const { return *std::max_element(heights_.begin(), heights_.end()); }
  double min_height() const { return *std::min_element(heights_.begin(), heights_.end()); }

  bool operator==(const HeightField& o) const {
    return origin_ == o.origin_ && resolution_ == o.resolution_ && nx_ == o.nx_ && ny_ == o.ny_ &&
           heights_ == o.heights_;
  }

 private:
  // Node positions carry round-off; treat near-integer grid coordinates as exact nodes.
  static double snap(double f) {
    const double r = std::round(f);
    return std::abs(f - r) < 1e-9 ? r : f;
  }

  Vec2 origin_ = Vec2::Zero();
  double resolution_ = 0.05;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> heights_;
};

/// Height of the ideal stair function at a point (tile centred at the origin).
inline double stair_height(const TerrainSpec& spec, const Vec2& xy) {
  if (spec.type == TerrainType::kFlat) return 0.0;
  const double rho = std::max(std::abs(xy.x()), std::abs(xy.y()));
  const double half_platform = 0.5 * spec.platform_width;
  if (rho < half_platform) return 0.0;
  const int rings = spec.ring_count();
  int ring = spec.type == TerrainType::kSingleStep
                 ? 1
                 : static_cast<int>(std::floor((rho - half_platform) / spec.step_width)) + 1;
  ring = std::min(ring, rings);
  return ring * spec.step_height();
}

/// Concentric square rings rising by h(d) from a flat central platform out to
/// a raised border. Risers become one-cell ramps after bilinear interpolation.
inline HeightField generate_inverted_pyramid(const TerrainSpec& spec) {
  spec.validate();
  const double half = 0.5 * spec.tile_size + spec.border;
  const int n = static_cast<int>(std::lround(2.0 * half / spec.resolution)) + 1;
  HeightField field(Vec2(-half, -half), spec.resolution, n, n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) field.at(ix, iy) = stair_height(spec, field.node(ix, iy));
  return field;
}

/// Adds seeded bumps: a coarse lattice of uniform values in [-a, a],
/// bilinearly upsampled, so |dh| <= a everywhere. a = 0 returns the input.
inline HeightField add_micro_roughness(const HeightField& field, double amplitude, std::uint64_t seed,
                                       double wavelength = 0.2) {
  if (amplitude < 0.0) throw InvalidSpec("roughness amplitude must be nonnegative");
  HeightField out = field;
  if (amplitude == 0.0) return out;
  Rng rng(splitmix64(seed ^ 0x5215ull));
  const Vec2 lo = field.origin();
  const Vec2 hi = field.extent_max();
  const int cx = static_cast<int>(std::ceil((hi.x() - lo.x()) / wavelength)) + 1;
  const int cy = static_cast<int>(std::ceil((hi.y() - lo.y()) / wavelength)) + 1;
  std::vector<double> lattice(static_cast<std::size_t>(cx) * cy);
  for (double& v : lattice) v = amplitude * (2.0 * rng.uniform() - 1.0);
  auto lat = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * cx + i]; };
  for (int iy = 0; iy < field.ny(); ++iy) {
    for (int ix = 0; ix < field.nx(); ++ix) {
      const Vec2 p = field.node(ix, iy) - lo;
      const double fx = p.x() / wavelength;
      const double fy = p.y() / wavelength;
      const int i = std::min(static_cast<int>(fx), cx - 2);
      const int j = std::min(static_cast<int>(fy), cy - 2);
      const double tx = clamp(fx - i, 0.0, 1.0);
      const double ty = clamp(fy - j, 0.0, 1.0);
      const double d = (1.0 - ty) * ((1.0 - tx) * lat(i, j) + tx * lat(i + 1, j)) +
                       ty * ((1.0 - tx) * lat(i, j + 1) + tx * lat(i + 1, j + 1));
      out.at(ix, iy) += clamp(d, -amplitude, amplitude);
    }
  }
  return out;
}

inline HeightField generate_terrain(const TerrainSpec& spec) {
  HeightField f = generate_inverted_pyramid(spec);
  return add_micro_roughness(f, spec.roughness, spec.seed, spec.roughness_wavelength);
}

// ---------------------------------------------------------------------------
// Curriculum spawn / target sampling

struct CurriculumState {
  std::uint64_t episode = 0;  ///< k
  double min_dist = 0.5;      ///< m
  double max_cap = 10.0;      ///< m

  /// u(k) = cap * exp(-1 / (k + 1)).
  double upper_bound() const { return max_cap * std::exp(-1.0 / (static_cast<double>(episode) + 1.0)); }
};

struct SpawnOptions {
  double platform_margin = 0.3;   ///< m kept clear of the first riser when spawning
  double tile_margin = 0.5;       ///< m kept clear of the tile edge for targets
  double yaw_range = 0.5;         ///< rad, spawn yaw drawn from [-range, range]
  bool require_off_platform = false;  ///< targets must lie beyond the first riser
  double off_platform_clearance = 0.3;  ///< m past the riser
  int max_attempts = 1000;
};

struct SpawnTarget {
  Vec2 spawn_xy = Vec2::Zero();
  double spawn_yaw = 0.0;
  Vec2 target_xy = Vec2::Zero();
  double distance = 0.0;
};

inline SpawnTarget sample_spawn_and_target(const TerrainSpec& spec, const CurriculumState& cur, Rng& rng,
                                           const SpawnOptions& opt = {}) {
  const double half_platform = 0.5 * spec.platform_width - opt.platform_margin;
  if (spec.type != TerrainType::kFlat && !(half_platform > 0.0))
    throw SamplingFailed("central platform too small to spawn on");
  const double spawn_half = spec.type == TerrainType::kFlat ? 0.5 * spec.tile_size - opt.tile_margin : half_platform;
  const double tile_half = 0.5 * spec.tile_size - opt.tile_margin;
  const double upper = std::max(cur.min_dist, cur.upper_bound());
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    SpawnTarget st;
    st.spawn_xy = Vec2(rng.uniform(-spawn_half, spawn_half), rng.uniform(-spawn_half, spawn_half));
    st.spawn_yaw = rng.uniform(-opt.yaw_range, opt.yaw_range);
    const double dist = rng.uniform(cur.min_dist, upper);
    const double theta = rng.uniform(-kPi, kPi);
    Vec2 target = st.spawn_xy + dist * Vec2(std::cos(theta), std::sin(theta));
    target.x() = clamp(target.x(), -tile_half, tile_half);
    target.y() = clamp(target.y(), -tile_half, tile_half);
    st.target_xy = target;
    st.distance = (target - st.spawn_xy).norm();
    if (st.distance < cur.min_dist) continue;
    if (opt.require_off_platform && spec.type != TerrainType::kFlat) {
      const double rho = std::max(std::abs(target.x()), std::abs(target.y()));
      if (rho < 0.5 * spec.platform_width + opt.off_platform_clearance) continue;
    }
    return st;
  }
  throw SamplingFailed("no valid spawn/target pair after " + std::to_string(opt.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Grid file I/O

inline std::string spec_echo(const TerrainSpec& s) {
  std::ostringstream os;
  os << std::setprecision(17) << "type=" << to_string(s.type) << " tile_size=" << s.tile_size
     << " border=" << s.border << " step_width=" << s.step_width << " platform_width=" << s.platform_width
     << " difficulty=" << s.difficulty << " step_height=" << s.step_height() << " rings=" << s.ring_count()
     << " friction=" << s.friction << " resolution=" << s.resolution << " roughness=" << s.roughness
     << " seed=" << s.seed;
  return os.str();
}

inline void write_height_field(std::ostream& os, const HeightField& f, const std::string& echo) {
  char buf[64];
  os << "# hll heightfield v1\n";
  std::snprintf(buf, sizeof buf, "%.17g %.17g", f.origin().x(), f.origin().y());
  os << "origin " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", f.resolution());
  os << "resolution " << buf << "\n";
  os << "dims " << f.nx() << " " << f.ny() << "\n";
  os << "spec " << echo << "\n";
  os << "data\n";
  for (int iy = 0; iy < f.ny(); ++iy) {
    for (int ix = 0; ix < f.nx(); ++ix) {
      std::snprintf(buf, sizeof buf, "%.17g", f.at(ix, iy));
      if (ix) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

inline void save_height_field(const std::string& path, const HeightField& f, const std::string& echo) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write terrain file " + path);
  write_height_field(os, f, echo);
}

inline HeightField read_height_field(std::istream& is) {
  std::string line, key;
  std::getline(is, line);
  if (line.rfind("# hll heightfield", 0) != 0) throw InvalidSpec("not a height field file");
  Vec2 origin = Vec2::Zero();
  double res = 0.0;
  int nx = 0, ny = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    ls >> key;
    if (key == "origin") ls >> origin.x() >> origin.y();
    else if (key == "resolution") ls >> res;
    else if (key == "dims") ls >> nx >> ny;
    else if (key == "data") break;
  }
  HeightField f(origin, res, nx, ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      if (!(is >> f.at(ix, iy))) throw InvalidSpec("truncated height field data");
  return f;
}

inline HeightField load_height_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("terrain file not found: " + path);
  return read_height_field(is);
}

}  // namespace hll
