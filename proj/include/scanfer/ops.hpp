#pragma once

#include "scanfer/autograd.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace scanfer {

enum class Mode { train, eval };
enum class Padding { same, valid };

/// Per-channel running estimates maintained by batch normalization.
struct RunningStats {
    Tensor mean;
    Tensor var;

    RunningStats() = default;
    explicit RunningStats(Index channels) : mean(Shape{channels}, 0.0), var(Shape{channels}, 1.0) {}
};

// Image-shaped operators accept either C x H x W or N x C x H x W inputs and
// return the same rank they were given.

/// 2-D cross-correlation. `same` pads by k/2 (k must be odd).
Variable conv2d(const Variable& input, const Variable& weight, const Variable& bias, Index stride = 1,
                Padding padding = Padding::same);

/// Batch normalization over batch and spatial axes per channel.
///
/// Train mode normalizes with the biased batch variance and updates `stats`
/// with the unbiased one; eval mode normalizes with `stats`.
Variable batchnorm2d(const Variable& input, const Variable& gamma, const Variable& beta, RunningStats& stats,
                     Mode mode, double eps = 1e-5, double momentum = 0.1);

/// Parametric ReLU. `slope` holds one value per channel, or a single shared
/// value. The channel axis is 0 for rank 1 and 3, and 1 for rank 2 and 4.
Variable prelu(const Variable& input, const Variable& slope);

/// Logistic function, clamped so every output lies strictly inside (0, 1).
Variable sigmoid(const Variable& input);

/// Mean over the two trailing spatial axes: C x H x W -> C, N x C x H x W -> N x C.
Variable gap_spatial(const Variable& input);

/// Elementwise maximum across equally shaped tensors. The gradient goes to
/// the first input holding the maximum.
Variable max_over_set(std::span<const Variable> inputs);

/// weight . x + bias for x of shape n (-> m) or N x n (-> N x m).
Variable linear(const Variable& input, const Variable& weight, const Variable& bias);

/// Log-sum-exp stabilized cross-entropy of one logit vector against a label.
Variable softmax_cross_entropy(const Variable& logits, int label);

/// Batch-mean cross-entropy for N x K logits.
Variable softmax_cross_entropy(const Variable& logits, std::span<const int> labels);

/// Spatial window [row0, row0 + rows) x [col0, col0 + cols).
Variable crop(const Variable& input, Index row0, Index rows, Index col0, Index cols);

/// Concatenation along the last axis (rank 1 or 2).
Variable concat(const Variable& a, const Variable& b);

/// Zero-padded `same` 1-D correlation along the last axis, no bias.
/// Accepts C or N x C.
Variable channel_conv1d(const Variable& input, const Variable& kernel);

/// Multiplies every spatial position of channel c by scales[c].
/// C x H x W with C scales, or N x C x H x W with N x C scales.
Variable scale_channels(const Variable& input, const Variable& scales);

Variable add(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double factor);
Variable sum(const Variable& a);
/// Sum of input * weights with a constant weight tensor.
Variable weighted_sum(const Variable& a, const Tensor& weights);

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator*(double s, const Variable& a) { return scale(a, s); }

/// Fingerprint of the branch every piecewise op takes (PReLU side, max
/// winner) while tracing is on. Two evaluations with different digests sit
/// on different smooth pieces.
namespace branch_trace {
void start();
std::uint64_t stop();
}  // namespace branch_trace

/// Hooks used by negative-control tests of the gradient checker.
namespace testing_hooks {
void set_corrupt_backward(bool on);
bool corrupt_backward();
}  // namespace testing_hooks

}  // namespace scanfer
