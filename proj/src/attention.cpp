#include "scanfer/attention.hpp"

#include "scanfer/errors.hpp"
#include "scanfer/init.hpp"

#include <cmath>

namespace scanfer {

ScanBlock ScanBlock::create(Index channels, Rng& rng) {
    if (channels < 1) throw std::invalid_argument("ScanBlock: channels must be positive");
    ScanBlock b;
    b.conv_weight = Variable(xavier_uniform({channels, channels, 3, 3}, channels * 9, channels * 9, rng), true);
    b.conv_bias = Variable(Tensor({channels}, 0.0), true);
    b.prelu_slope = Variable(Tensor({channels}, 0.25), true);
    b.bn_gamma = Variable(Tensor({channels}, 1.0), true);
    b.bn_beta = Variable(Tensor({channels}, 0.0), true);
    b.bn_stats = RunningStats(channels);
    return b;
}

ScanResult scan_forward(ScanBlock& block, const Variable& input, Mode mode) {
    const Shape& s = input.shape();
    if (s.size() < 3) throw ShapeError("scan_forward: expected an image-shaped input, got " + to_string(s));
    const Index c = s[s.size() - 3];
    if (c != block.channels())
        throw ShapeError("scan_forward: input has " + std::to_string(c) + " channels, block expects " +
                         std::to_string(block.channels()));
    Variable z = conv2d(input, block.conv_weight, block.conv_bias, 1, Padding::same);
    z = prelu(z, block.prelu_slope);
    z = batchnorm2d(z, block.bn_gamma, block.bn_beta, block.bn_stats, mode);
    Variable w = sigmoid(z);
    return {w, mul(input, w)};
}

int eca_kernel_size(Index channels, double gamma, double b) {
    if (channels < 1) throw std::invalid_argument("eca_kernel_size: channels must be positive");
    const double t = std::abs(std::log2(static_cast<double>(channels)) / gamma + b / gamma);
    int k = static_cast<int>(std::floor(t));
    if (k % 2 == 0) ++k;
    return k < 1 ? 1 : k;
}

EcaBlock EcaBlock::create(Index channels, Rng& rng, int kernel_size) {
    const int k = kernel_size > 0 ? kernel_size : eca_kernel_size(channels);
    if (k % 2 == 0) throw std::invalid_argument("EcaBlock: kernel size must be odd");
    return {Variable(xavier_uniform({k}, k, k, rng), true)};
}

Variable eca_weights(const EcaBlock& block, const Variable& input) {
    return sigmoid(channel_conv1d(gap_spatial(input), block.kernel));
}

Variable eca_forward(const EcaBlock& block, const Variable& input) {
    return scale_channels(input, eca_weights(block, input));
}

}  // namespace scanfer
