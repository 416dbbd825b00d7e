#pragma once

// Dense ELU networks over a flat parameter vector, a diagonal-Gaussian actor
// with a critic, Adam, and a running observation normalizer.

#include <hll/core.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace hll {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Layer shapes of one MLP living at `offset` inside a flat parameter vector.
/// Weights are stored column-major, W (out x in) followed by b (out).
struct MlpShape {
  std::vector<int> sizes;  ///< input, hidden..., output
  std::size_t offset = 0;

  int layers() const { return static_cast<int>(sizes.size()) - 1; }
  int input() const { return sizes.front(); }
  int output() const { return sizes.back(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (int l = 0; l < layers(); ++l) n += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
    return n;
  }

  std::size_t weight_offset(int l) const {
    std::size_t o = offset;
    for (int k = 0; k < l; ++k) o += static_cast<std::size_t>(sizes[k + 1]) * (sizes[k] + 1);
    return o;
  }
};

template <typename S>
struct MlpCache {
  std::vector<MatX<S>> act;  ///< act[0] = input, act[l] = output of layer l
};

template <typename S>
inline S elu(S x) {
  return x > S(0) ? x : std::expm1(x);
}

/// Forward pass on a batch stored column-wise (features x batch).
template <typename S>
MatX<S> mlp_forward(const MlpShape& shape, const S* theta, const MatX<S>& x, MlpCache<S>* cache = nullptr) {
  if (x.rows() != shape.input()) throw ConfigError("network input has the wrong width");
  MatX<S> h = x;
  if (cache) {
    cache->act.clear();
    cache->act.push_back(h);
  }
  for (int l = 0; l < shape.layers(); ++l) {
    const int in = shape.sizes[l], out = shape.sizes[l + 1];
    const S* p = theta + shape.weight_offset(l);
    Eigen::Map<const MatX<S>> w(p, out, in);
    Eigen::Map<const VecX<S>> b(p + static_cast<std::size_t>(out) * in, out);
    MatX<S> z = w * h;
    z.colwise() += b;
    if (l + 1 < shape.layers()) z = z.unaryExpr([](S v) { return elu(v); });
    h = std::move(z);
    if (cache) cache->act.push_back(h);
  }
  return h;
}

/// Accumulates dL/dtheta into `grad` given dL/d(output).
template <typename S>
void mlp_backward(const MlpShape& shape, const S* theta, const MlpCache<S>& cache, const MatX<S>& d_out, S* grad) {
  MatX<S> delta = d_out;
  for (int l = shape.layers() - 1; l >= 0; --l) {
    const int in = shape.sizes[l], out = shape.sizes[l + 1];
    const std::size_t off = shape.weight_offset(l);
    Eigen::Map<const MatX<S>> w(theta + off, out, in);
    Eigen::Map<MatX<S>> gw(grad + off, out, in);
    Eigen::Map<VecX<S>> gb(grad + off + static_cast<std::size_t>(out) * in, out);
    const MatX<S>& input = cache.act[static_cast<std::size_t>(l)];
    gw.noalias() += delta * input.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      MatX<S> back = w.transpose() * delta;
      // ELU'(z) = 1 for z > 0, else exp(z) = y + 1.
      const MatX<S>& y = input;
      back = back.binaryExpr(y, [](S g, S v) { return v > S(0) ? g : g * (v + S(1)); });
      delta = std::move(back);
    }
  }
}

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;

struct NetworkSpec {
  int obs_dim = 0;
  int act_dim = 6;
  std::vector<int> actor_hidden{256, 128};
  std::vector<int> critic_hidden{256, 128};
  double init_log_std = -0.5;
};

/// Actor MLP, state-independent log-std, critic MLP, all in one flat vector.
template <typename S>
class ActorCritic {
 public:
  ActorCritic() = default;
  explicit ActorCritic(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.obs_dim < 1 || spec_.act_dim < 1) throw ConfigError("network dimensions must be positive");
    actor_.sizes.push_back(spec_.obs_dim);
    for (int h : spec_.actor_hidden) actor_.sizes.push_back(h);
    actor_.sizes.push_back(spec_.act_dim);
    actor_.offset = 0;
    log_std_offset_ = actor_.count();
    critic_.sizes.push_back(spec_.obs_dim);
    for (int h : spec_.critic_hidden) critic_.sizes.push_back(h);
    critic_.sizes.push_back(1);
    critic_.offset = log_std_offset_ + static_cast<std::size_t>(spec_.act_dim);
    theta_ = VecX<S>::Zero(static_cast<Eigen::Index>(critic_.offset + critic_.count()));
  }

  const NetworkSpec& spec() const { return spec_; }
  const MlpShape& actor() const { return actor_; }
  const MlpShape& critic() const { return critic_; }
  std::size_t log_std_offset() const { return log_std_offset_; }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }
  VecX<S>& params() { return theta_; }
  const VecX<S>& params() const { return theta_; }

  /// Glorot-uniform weights, zero biases, a near-zero actor output layer.
  void initialize(Rng& rng) {
    auto init = [&](const MlpShape& m, double out_gain) {
      for (int l = 0; l < m.layers(); ++l) {
        const int in = m.sizes[l], out = m.sizes[l + 1];
        const double gain = l + 1 == m.layers() ? out_gain : 1.0;
        const double bound = gain * std::sqrt(6.0 / (in + out));
        S* p = theta_.data() + m.weight_offset(l);
        for (int k = 0; k < in * out; ++k) p[k] = static_cast<S>(rng.uniform(-bound, bound));
        for (int k = 0; k < out; ++k) p[static_cast<std::size_t>(in) * out + k] = S(0);
      }
    };
    init(actor_, 0.01);
    init(critic_, 1.0);
    for (int j = 0; j < spec_.act_dim; ++j) theta_[static_cast<Eigen::Index>(log_std_offset_) + j] = static_cast<S>(spec_.init_log_std);
  }

  Eigen::Map<const VecX<S>> log_std() const {
    return Eigen::Map<const VecX<S>>(theta_.data() + log_std_offset_, spec_.act_dim);
  }

  void clamp_log_std() {
    for (int j = 0; j < spec_.act_dim; ++j) {
      S& v = theta_[static_cast<Eigen::Index>(log_std_offset_) + j];
      v = static_cast<S>(clamp(static_cast<double>(v), kLogStdMin, kLogStdMax));
    }
  }

  MatX<S> mean(const MatX<S>& obs, MlpCache<S>* cache = nullptr) const {
    return mlp_forward(actor_, theta_.data(), obs, cache);
  }
  MatX<S> value(const MatX<S>& obs, MlpCache<S>* cache = nullptr) const {
    return mlp_forward(critic_, theta_.data(), obs, cache);
  }

 private:
  NetworkSpec spec_;
  MlpShape actor_, critic_;
  std::size_t log_std_offset_ = 0;
  VecX<S> theta_;
};

/// Diagonal Gaussian log density of each column of `a`.
template <typename S>
VecX<S> gaussian_log_prob(const MatX<S>& a, const MatX<S>& mu, const Eigen::Ref<const VecX<S>>& log_std) {
  const S half_log_2pi = static_cast<S>(0.5 * std::log(2.0 * kPi));
  VecX<S> out(a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    S acc = S(0);
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      const S z = (a(j, c) - mu(j, c)) * std::exp(-log_std[j]);
      acc += S(-0.5) * z * z - log_std[j] - half_log_2pi;
    }
    out[c] = acc;
  }
  return out;
}

template <typename S>
S gaussian_entropy(const Eigen::Ref<const VecX<S>>& log_std) {
  const S k = static_cast<S>(0.5 * std::log(2.0 * kPi * std::exp(1.0)));
  return log_std.sum() + k * static_cast<S>(log_std.size());
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename S>
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  VecX<S> m, v;

  void resize(std::size_t n) {
    m = VecX<S>::Zero(static_cast<Eigen::Index>(n));
    v = VecX<S>::Zero(static_cast<Eigen::Index>(n));
    t = 0;
  }

  void step(VecX<S>& theta, const VecX<S>& g) {
    if (m.size() != theta.size()) resize(static_cast<std::size_t>(theta.size()));
    ++t;
    const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const S step = static_cast<S>(lr * std::sqrt(c2) / c1);
    const S e = static_cast<S>(eps * std::sqrt(c2));
    theta.array() -= step * m.array() / (v.array().sqrt() + e);
  }
};

/// Scales `g` in place so its global L2 norm is at most `max_norm`; returns the pre-clip norm.
template <typename S>
double clip_grad_norm(VecX<S>& g, double max_norm) {
  const double n = std::sqrt(g.template cast<double>().squaredNorm());
  if (max_norm > 0.0 && n > max_norm) g *= static_cast<S>(max_norm / n);
  return n;
}

// ---------------------------------------------------------------------------
// Observation normalization

/// Running mean/variance with parallel-merge updates.
struct RunningNorm {
  VecX<double> mean, var;
  double count = 0.0;
  double clip = 5.0;

  void resize(int n) {
    mean = VecX<double>::Zero(n);
    var = VecX<double>::Ones(n);
    count = 0.0;
  }

  /// `batch` is features x samples.
  void update(const MatX<double>& batch) {
    if (batch.cols() == 0) return;
    const double nb = static_cast<double>(batch.cols());
    const VecX<double> bm = batch.rowwise().mean();
    const VecX<double> bv = (batch.colwise() - bm).array().square().rowwise().sum() / nb;
    if (count == 0.0) {
      mean = bm;
      var = bv;
      count = nb;
      return;
    }
    const double tot = count + nb;
    const VecX<double> delta = bm - mean;
    mean += delta * (nb / tot);
    var = (var * count + bv * nb + delta.array().square().matrix() * (count * nb / tot)) / tot;
    count = tot;
  }

  template <typename S>
  MatX<S> apply(const MatX<S>& x) const {
    MatX<S> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = mean[r];
      const double inv = 1.0 / std::sqrt(var[r] + 1e-8);
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        out(r, c) = static_cast<S>(clamp((static_cast<double>(x(r, c)) - m) * inv, -clip, clip));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Little-endian scalar I/O

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw MissingArtifact("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

}  // namespace hll
