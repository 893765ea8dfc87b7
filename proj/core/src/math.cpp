#include "iwl/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace iwl {

namespace {

constexpr double kProbFloor = 1e-300;

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::invalid_argument(std::string(what) + ": non-finite entry at index " +
                                  std::to_string(i));
    }
  }
}

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  require_finite(logits, "softmax");
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

void softmax_inplace(std::span<double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : values) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : values) v /= sum;
}

void softmax_vjp(std::span<const double> probs, std::span<const double> upstream,
                 std::span<double> out) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * upstream[i];
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (upstream[i] - dot);
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  require_finite(logits, "log_sum_exp");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return m + std::log(sum);
}

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_difference_gradient: non-finite value at coordinate " +
                               std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be >= 1");
  const std::uint64_t threshold = -n % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return x % n;
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = at(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

std::vector<double> singular_values(std::span<const double> a, int rows, int cols) {
  if (rows < cols) throw std::invalid_argument("singular_values: requires rows >= cols");
  std::vector<double> ata(static_cast<std::size_t>(cols) * cols, 0.0);
  for (int i = 0; i < cols; ++i) {
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r)
        s += a[static_cast<std::size_t>(r) * cols + i] * a[static_cast<std::size_t>(r) * cols + j];
      ata[static_cast<std::size_t>(i) * cols + j] = s;
    }
  }
  std::vector<double> eig = symmetric_eigenvalues(std::move(ata), cols);
  std::vector<double> sv(cols);
  for (int i = 0; i < cols; ++i) sv[i] = std::sqrt(std::max(0.0, eig[cols - 1 - i]));
  return sv;
}

std::vector<double> invert_matrix(std::span<const double> m, int n) {
  std::vector<double> a(m.begin(), m.end());
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + i] = 1.0;
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) throw std::invalid_argument("invert_matrix: singular matrix");

  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[static_cast<std::size_t>(r) * n + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * n + col]))
        pivot = r;
    }
    const double pv = a[static_cast<std::size_t>(pivot) * n + col];
    if (std::abs(pv) < 1e-12 * scale) {
      throw std::invalid_argument("invert_matrix: singular matrix");
    }
    if (pivot != col) {
      for (int k = 0; k < n; ++k) {
        std::swap(a[static_cast<std::size_t>(pivot) * n + k],
                  a[static_cast<std::size_t>(col) * n + k]);
        std::swap(inv[static_cast<std::size_t>(pivot) * n + k],
                  inv[static_cast<std::size_t>(col) * n + k]);
      }
    }
    const double inv_pv = 1.0 / a[static_cast<std::size_t>(col) * n + col];
    for (int k = 0; k < n; ++k) {
      a[static_cast<std::size_t>(col) * n + k] *= inv_pv;
      inv[static_cast<std::size_t>(col) * n + k] *= inv_pv;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[static_cast<std::size_t>(r) * n + col];
      if (factor == 0.0) continue;
      for (int k = 0; k < n; ++k) {
        a[static_cast<std::size_t>(r) * n + k] -= factor * a[static_cast<std::size_t>(col) * n + k];
        inv[static_cast<std::size_t>(r) * n + k] -=
            factor * inv[static_cast<std::size_t>(col) * n + k];
      }
    }
  }
  return inv;
}

bool is_prob_vector(std::span<const double> p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

void check_prob_vector(std::span<const double> p, double tol, const char* what) {
  if (!is_prob_vector(p, tol)) {
    throw std::invalid_argument(std::string(what) + ": not a valid probability vector");
  }
}

}  // namespace iwl
