#pragma once

#include "scanfer/image.hpp"
#include "scanfer/model.hpp"

#include <functional>

namespace scanfer {

struct Heatmap {
    Tensor values;  // H x W in [0, 1]; max is 1 unless the map is all zero
    Index source_height = 0;
    Index source_width = 0;
};

using ActivationScore = std::function<Variable(const Variable&)>;

/// Gradient-weighted class activation map of `activation` (C x H x W or
/// 1 x C x H x W) for the scalar produced by `score`: channel weights are
/// the spatial means of d score / d activation, the weighted channel sum is
/// rectified, upsampled to out_size x out_size and scaled to max 1.
Heatmap gradcam_from_activation(const Tensor& activation, const ActivationScore& score, Index out_size);

/// Grad-CAM on the deep backbone tap. The class score is the sum of the
/// target logit over the context-branch heads, the only classifiers that
/// read that tap.
Heatmap gradcam(FerModel& model, const Tensor& image, int target_class);

/// Raw map as binary P5.
Bytes render_heatmap(const Heatmap& heatmap);

/// P6 overlay: base * (1 - w) + red * w per pixel.
Bytes render_overlay(const Heatmap& heatmap, const Tensor& base);

}  // namespace scanfer
