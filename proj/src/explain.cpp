#include "scanfer/explain.hpp"

#include "scanfer/errors.hpp"

#include <stdexcept>
#include <utility>

namespace scanfer {

Heatmap gradcam_from_activation(const Tensor& activation, const ActivationScore& score, Index out_size) {
    Tensor a = activation;
    if (a.rank() == 4) {
        if (a.dim(0) != 1) throw ShapeError("gradcam: expected a single activation map");
        a = a.reshaped({a.dim(1), a.dim(2), a.dim(3)});
    }
    if (a.rank() != 3) throw ShapeError("gradcam: expected C x H x W activation");
    const Index c = a.dim(0), h = a.dim(1), w = a.dim(2);

    Variable leaf(activation, true);
    backward(score(leaf));
    const Tensor grad = leaf.grad();

    const ConstMatrixMap am = std::as_const(a).matrix(c, h * w);
    const ConstMatrixMap gm = grad.matrix(c, h * w);
    const Eigen::VectorXd alpha = gm.rowwise().mean();
    Tensor raw({1, h, w});
    raw.data() = (am.transpose() * alpha).cwiseMax(0.0);

    Tensor up = resize_bilinear(raw, out_size);
    const double peak = up.data().maxCoeff();
    if (peak > 0.0) up.data() /= peak;
    up.data() = up.data().cwiseMax(0.0).cwiseMin(1.0);
    return {up.reshaped({out_size, out_size}), h, w};
}

Heatmap gradcam(FerModel& model, const Tensor& image, int target_class) {
    if (target_class < 0 || target_class >= model.config().num_classes)
        throw std::out_of_range("gradcam: class " + std::to_string(target_class) + " outside [0, 6]");
    Tensor batch = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
    const Index size = model.config().backbone.input_size;
    if (batch.rank() != 4 || batch.dim(0) != 1 || batch.dim(1) != 3 || batch.dim(2) != size || batch.dim(3) != size)
        throw ShapeError("gradcam: expected one 3 x " + std::to_string(size) + " x " + std::to_string(size) + " image");

    const Taps taps = model.backbone_forward(Variable(batch), Mode::eval);
    Tensor onehot({1, model.config().num_classes}, 0.0);
    onehot[target_class] = 1.0;
    auto score = [&](const Variable& a) {
        const CciOutput cci = model.cci_branch(a, Mode::eval);
        Variable s = weighted_sum(cci.logits.front(), onehot);
        for (std::size_t i = 1; i < cci.logits.size(); ++i) s = add(s, weighted_sum(cci.logits[i], onehot));
        return s;
    };
    Heatmap map = gradcam_from_activation(taps.f_l.value(), score, size);
    // Leave no parameter grads behind.
    for (auto& p : model.parameters()) p.var.zero_grad();
    return map;
}

Bytes render_heatmap(const Heatmap& heatmap) { return encode_pgm(heatmap.values); }

Bytes render_overlay(const Heatmap& heatmap, const Tensor& base) {
    const Tensor& w = heatmap.values;
    if (base.rank() != 3 || base.dim(0) != 3 || base.dim(1) != w.dim(0) || base.dim(2) != w.dim(1))
        throw ShapeError("render_overlay: base image " + to_string(base.shape()) + " does not match heatmap " +
                         to_string(w.shape()));
    const Index n = w.size();
    Tensor out = base;
    for (Index c = 0; c < 3; ++c) {
        const double red = c == 0 ? 1.0 : 0.0;
        for (Index p = 0; p < n; ++p) out[c * n + p] = base[c * n + p] * (1.0 - w[p]) + red * w[p];
    }
    return encode_ppm(out);
}

}  // namespace scanfer
