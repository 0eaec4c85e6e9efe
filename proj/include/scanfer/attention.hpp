#pragma once

#include "scanfer/ops.hpp"
#include "scanfer/rng.hpp"

namespace scanfer {

/// Spatio-channel attention: one weight per channel per spatial position,
/// computed as sigmoid(BN(PReLU(conv3x3(I)))) and applied multiplicatively.
///
/// A single instance is reused for every local patch and for the global pass
/// over the same feature map.
struct ScanBlock {
    Variable conv_weight;  // C x C x 3 x 3
    Variable conv_bias;    // C
    Variable prelu_slope;  // C
    Variable bn_gamma;     // C
    Variable bn_beta;      // C
    RunningStats bn_stats;

    static ScanBlock create(Index channels, Rng& rng);
    [[nodiscard]] Index channels() const { return conv_bias.shape()[0]; }
};

struct ScanResult {
    Variable weights;  // attention map in (0, 1), shaped like the input
    Variable output;   // input * weights
};

ScanResult scan_forward(ScanBlock& block, const Variable& input, Mode mode);

/// Adaptive 1-D kernel size for channel attention:
/// floor(|log2(C) / gamma + b / gamma|), bumped to the next odd value.
int eca_kernel_size(Index channels, double gamma = 2.0, double b = 1.0);

/// Channel-only attention: GAP -> 1-D conv across channels -> sigmoid ->
/// per-channel rescale.
struct EcaBlock {
    Variable kernel;  // k_eca, odd, no bias

    /// `kernel_size` of 0 picks eca_kernel_size(channels).
    static EcaBlock create(Index channels, Rng& rng, int kernel_size = 0);
    [[nodiscard]] Index kernel_size() const { return kernel.shape()[0]; }
};

/// Channel weights s = sigmoid(conv1d(GAP(F))), shaped C or N x C.
Variable eca_weights(const EcaBlock& block, const Variable& input);
Variable eca_forward(const EcaBlock& block, const Variable& input);

}  // namespace scanfer
