#pragma once

#include <span>
#include <vector>

#include "iwl/math.hpp"

namespace iwl {

/// Shape of a fully connected net with rectified-linear hidden layers and a
/// linear output. dims = {in, h1, ..., out}; dims = {in, out} is a plain
/// affine map. Parameters live in an external flat vector, per layer
/// W (out x in, row-major) followed by b (out), so models can own one
/// contiguous parameter block shared with the optimizer.
struct MlpShape {
  std::vector<int> dims;

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int num_layers() const { return static_cast<int>(dims.size()) - 1; }
  std::size_t num_params() const;
  /// Offset of layer l's weight block; its bias follows the weights.
  std::size_t layer_offset(int layer) const;
};

/// Per-call activation cache. act[0] is the input, act[l] the post-ReLU
/// output of layer l, act[L] the raw output logits.
struct MlpCache {
  std::vector<std::vector<double>> act;
};

/// Glorot-uniform weights (a = sqrt(6/(fan_in+fan_out))), zero biases.
void mlp_init_glorot(const MlpShape& shape, std::span<double> params, Rng& rng);

void mlp_forward(const MlpShape& shape, std::span<const double> params,
                 std::span<const double> x, MlpCache& cache);

std::vector<double> mlp_forward(const MlpShape& shape, std::span<const double> params,
                                std::span<const double> x);

/// Accumulates dL/dparams into param_grad given dL/d(output logits).
/// param_grad may be empty to skip parameter gradients (e.g. frozen nets);
/// input_grad, when non-null, receives dL/dx.
void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpCache& cache,
                  std::span<const double> output_grad, std::span<double> param_grad,
                  std::vector<double>* input_grad = nullptr);

}  // namespace iwl
