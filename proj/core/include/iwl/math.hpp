#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace iwl {

/// Numerically stable softmax. Rejects non-finite input, never overflows,
/// output sums to 1 within 1e-12 for any finite logits.
std::vector<double> softmax(std::span<const double> logits);

/// In-place variant used for transition-matrix columns.
void softmax_inplace(std::span<double> values);

/// Vector-Jacobian product of softmax: given probs p = softmax(z) and an
/// upstream gradient g = dL/dp, returns dL/dz = p .* (g - <p,g>).
void softmax_vjp(std::span<const double> probs, std::span<const double> upstream,
                 std::span<double> out);

/// log(sum_i exp(z_i)) in the shift-stabilized form. Errors on empty input.
double log_sum_exp(std::span<const double> logits);

/// log with the engine-wide probability floor of 1e-300.
double safe_log(double p);

/// Central-difference gradient (f(x+h*e_i) - f(x-h*e_i)) / (2h) per coordinate.
/// Errors (naming the coordinate) if f evaluates to a non-finite value.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double h = 1e-5);

/// xoshiro256++ stream seeded via splitmix64. Fixed algorithm, identical
/// sequences for identical seeds on every platform. Single consumer per
/// stream; use derive() to fork independent streams from one root seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform double in (0, 1].
  double uniform_open();
  /// Unbiased integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller (cached spare kept in the stream).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Deterministic sub-stream seed: splitmix64 over (seed, stream).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Eigenvalues of a symmetric n x n matrix (row-major), ascending, via
/// cyclic Jacobi rotations. Intended for the small matrices this engine
/// works with (n <= ~16).
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n);

/// Singular values of a rows x cols matrix (row-major), descending,
/// computed from the eigenvalues of A^T A. Requires rows >= cols.
std::vector<double> singular_values(std::span<const double> a, int rows, int cols);

/// Inverse of a square n x n matrix (row-major) by Gauss-Jordan with
/// partial pivoting. Errors on a singular matrix.
std::vector<double> invert_matrix(std::span<const double> m, int n);

/// True iff every entry is in [0,1] and the entries sum to 1 within tol.
bool is_prob_vector(std::span<const double> p, double tol = 1e-9);

/// Throws std::invalid_argument with `what` if p is not a valid probability
/// vector within tol.
void check_prob_vector(std::span<const double> p, double tol, const char* what);

}  // namespace iwl
