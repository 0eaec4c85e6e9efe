#include "scanfer/model.hpp"

#include "scanfer/errors.hpp"
#include "scanfer/init.hpp"

#include <algorithm>
#include <stdexcept>

namespace scanfer {

BackboneConfig BackboneConfig::desk() { return {}; }

BackboneConfig BackboneConfig::paper() {
    BackboneConfig c;
    c.input_size = 224;
    c.channels = {64, 128, 512, 1024};
    c.tap_u = 2;
    c.tap_l = 3;
    return c;
}

Index BackboneConfig::spatial_after(Index stage) const {
    Index s = input_size;
    for (Index i = 0; i <= stage; ++i) s = (s - 1) / 2 + 1;
    return s;
}

void BackboneConfig::validate() const {
    const auto stages = static_cast<Index>(channels.size());
    if (input_size < 4) throw std::invalid_argument("backbone: input size must be at least 4");
    if (stages < 2) throw std::invalid_argument("backbone: need at least two stages");
    for (Index c : channels)
        if (c < 1) throw std::invalid_argument("backbone: channel counts must be positive");
    if (tap_u < 0 || tap_l >= stages || tap_l <= tap_u)
        throw std::invalid_argument("backbone: tap_l must be a deeper stage than tap_u");
    if (tap_l != tap_u + 1 || spatial_after(tap_u) % 2 != 0)
        throw std::invalid_argument("backbone: deep tap must be exactly one halving below the shallow tap");
}

void ModelConfig::validate() const {
    backbone.validate();
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("model: lambda must lie in [0, 1]");
    if (num_classes != kNumExpressions) throw std::invalid_argument("model: the expression task has 7 classes");
    if (grid_rows < 1 || grid_cols < 1 || cci_rows < 1 || cci_cols < 1)
        throw std::invalid_argument("model: grid dimensions must be positive");
    if (cci_hidden < 1) throw std::invalid_argument("model: cci_hidden must be positive");
    const Index hu = backbone.spatial_after(backbone.tap_u);
    const Index hl = backbone.spatial_after(backbone.tap_l);
    if (grid_rows > hu || grid_cols > hu) throw std::invalid_argument("model: patch grid exceeds shallow tap size");
    if (cci_rows > hl || cci_cols > hl) throw std::invalid_argument("model: block grid exceeds deep tap size");
    if (eca_kernel < 0 || (eca_kernel > 0 && eca_kernel % 2 == 0))
        throw std::invalid_argument("model: eca_kernel must be 0 (adaptive) or odd");
}

Dense Dense::create(Index in, Index out, Rng& rng) {
    return {Variable(xavier_uniform({out, in}, in, out, rng), true), Variable(Tensor({out}, 0.0), true)};
}

FerModel FerModel::create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    FerModel m;
    m.config_ = config;
    Index in = 3;
    for (Index out : config.backbone.channels) {
        BackboneStage st;
        st.conv_weight = Variable(xavier_uniform({out, in, 3, 3}, in * 9, out * 9, rng), true);
        st.conv_bias = Variable(Tensor({out}, 0.0), false);  // constant: BN cancels any shift
        st.bn_gamma = Variable(Tensor({out}, 1.0), true);
        st.bn_beta = Variable(Tensor({out}, 0.0), true);
        st.prelu_slope = Variable(Tensor({out}, 0.25), true);
        st.bn_stats = RunningStats(out);
        m.stages.push_back(std::move(st));
        in = out;
    }
    const auto& bb = config.backbone;
    const Index cu = bb.channels[static_cast<std::size_t>(bb.tap_u)];
    const Index cl = bb.channels[static_cast<std::size_t>(bb.tap_l)];
    m.scan = ScanBlock::create(cu, rng);
    m.eca = EcaBlock::create(cl, rng, config.eca_kernel);
    m.head_u = Dense::create(2 * cu, config.num_classes, rng);
    for (Index i = 0; i < config.blocks(); ++i) {
        m.cci_projections.push_back(Dense::create(cl, config.cci_hidden, rng));
        m.cci_heads.push_back(Dense::create(config.cci_hidden, config.num_classes, rng));
    }
    return m;
}

Taps FerModel::backbone_forward(const Variable& images, Mode mode) {
    const auto& bb = config_.backbone;
    Taps taps;
    Variable x = images;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        auto& st = stages[i];
        x = conv2d(x, st.conv_weight, st.conv_bias, 2, Padding::same);
        x = batchnorm2d(x, st.bn_gamma, st.bn_beta, st.bn_stats, mode);
        x = prelu(x, st.prelu_slope);
        if (static_cast<Index>(i) == bb.tap_u) taps.f_u = x;
        if (static_cast<Index>(i) == bb.tap_l) {
            taps.f_l = x;
            break;
        }
    }
    return taps;
}

LocalGlobalOutput FerModel::local_global_branch(const Variable& f_u, Mode mode) {
    const Shape& s = f_u.shape();
    if (s.size() != 4 || s[1] != scan.channels())
        throw ShapeError("local_global_branch: expected N x " + std::to_string(scan.channels()) +
                         " x H x W, got " + to_string(s));
    LocalGlobalOutput out;
    for (const auto& patch : partition(f_u, config_.grid_rows, config_.grid_cols))
        out.patch_descriptors.push_back(gap_spatial(scan_forward(scan, patch, mode).output));
    out.v_l = max_over_set(out.patch_descriptors);
    out.v_g = gap_spatial(scan_forward(scan, f_u, mode).output);
    out.logits = head_u(concat(out.v_l, out.v_g));
    return out;
}

CciOutput FerModel::cci_branch(const Variable& f_l, Mode /*mode*/) {
    const Shape& s = f_l.shape();
    if (s.size() != 4) throw ShapeError("cci_branch: expected N x C x H x W, got " + to_string(s));
    if (s[2] < config_.cci_rows || s[3] < config_.cci_cols)
        throw ShapeError("cci_branch: feature map too small for the block grid");
    const Variable g = eca_forward(eca, f_l);
    CciOutput out;
    const auto blocks = partition(g, config_.cci_rows, config_.cci_cols);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        Variable h = gap_spatial(blocks[i]);
        out.logits.push_back(cci_heads[i](cci_projections[i](h)));
        out.h.push_back(std::move(h));
    }
    return out;
}

ForwardOutput FerModel::forward(const Tensor& images, std::span<const int> labels, Mode mode) {
    Tensor batch = images;
    if (images.rank() == 3) batch = images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)});
    const Index size = config_.backbone.input_size;
    if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != size || batch.dim(3) != size)
        throw ShapeError("model_forward: expected 3 x " + std::to_string(size) + " x " + std::to_string(size) +
                         " images, got " + to_string(images.shape()));
    if (!labels.empty() && static_cast<Index>(labels.size()) != batch.dim(0))
        throw ShapeError("model_forward: label count does not match batch size");

    ForwardOutput out;
    out.taps = backbone_forward(Variable(std::move(batch)), mode);
    auto lg = local_global_branch(out.taps.f_u, mode);
    auto cci = cci_branch(out.taps.f_l, mode);
    out.logits_u = lg.logits;
    out.v_l = lg.v_l;
    out.v_g = lg.v_g;
    out.logits_cci = std::move(cci.logits);
    out.h = std::move(cci.h);
    if (!labels.empty()) out.loss = total_loss(config_.lambda, out.logits_u, out.logits_cci, labels);
    return out;
}

int FerModel::predict(const Tensor& image) {
    const auto out = forward(image, Mode::eval);
    return argmax(out.logits_u.value().values());
}

std::vector<int> FerModel::predict_batch(const Tensor& images) {
    const auto out = forward(images, Mode::eval);
    const Tensor& logits = out.logits_u.value();
    const Index n = logits.dim(0), k = logits.dim(1);
    std::vector<int> pred;
    for (Index i = 0; i < n; ++i) pred.push_back(argmax(logits.values().subspan(static_cast<std::size_t>(i * k), static_cast<std::size_t>(k))));
    return pred;
}

std::vector<Parameter> FerModel::parameters() const {
    std::vector<Parameter> ps;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        const std::string p = "backbone." + std::to_string(i) + ".";
        ps.push_back({p + "conv.weight", st.conv_weight, ParamGroup::backbone, true});
        ps.push_back({p + "bn.gamma", st.bn_gamma, ParamGroup::backbone, false});
        ps.push_back({p + "bn.beta", st.bn_beta, ParamGroup::backbone, false});
        ps.push_back({p + "prelu.slope", st.prelu_slope, ParamGroup::backbone, false});
    }
    ps.push_back({"scan.conv.weight", scan.conv_weight, ParamGroup::heads, true});
    ps.push_back({"scan.conv.bias", scan.conv_bias, ParamGroup::heads, false});
    ps.push_back({"scan.prelu.slope", scan.prelu_slope, ParamGroup::heads, false});
    ps.push_back({"scan.bn.gamma", scan.bn_gamma, ParamGroup::heads, false});
    ps.push_back({"scan.bn.beta", scan.bn_beta, ParamGroup::heads, false});
    ps.push_back({"eca.kernel", eca.kernel, ParamGroup::heads, true});
    ps.push_back({"head_u.weight", head_u.weight, ParamGroup::heads, true});
    ps.push_back({"head_u.bias", head_u.bias, ParamGroup::heads, false});
    for (std::size_t i = 0; i < cci_heads.size(); ++i) {
        const std::string p = "cci." + std::to_string(i) + ".";
        ps.push_back({p + "proj.weight", cci_projections[i].weight, ParamGroup::heads, true});
        ps.push_back({p + "proj.bias", cci_projections[i].bias, ParamGroup::heads, false});
        ps.push_back({p + "head.weight", cci_heads[i].weight, ParamGroup::heads, true});
        ps.push_back({p + "head.bias", cci_heads[i].bias, ParamGroup::heads, false});
    }
    return ps;
}

std::vector<Buffer> FerModel::buffers() {
    std::vector<Buffer> bs;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string p = "backbone." + std::to_string(i) + ".bn.";
        bs.push_back({p + "running_mean", &stages[i].bn_stats.mean});
        bs.push_back({p + "running_var", &stages[i].bn_stats.var});
    }
    bs.push_back({"scan.bn.running_mean", &scan.bn_stats.mean});
    bs.push_back({"scan.bn.running_var", &scan.bn_stats.var});
    return bs;
}

StateDict FerModel::snapshot() const {
    StateDict state;
    for (const auto& p : parameters()) state.emplace_back(p.name, p.var.value());
    for (const auto& b : const_cast<FerModel*>(this)->buffers()) state.emplace_back(b.name, *b.tensor);
    return state;
}

void FerModel::restore(const StateDict& state) {
    auto assign = [&](const std::string& name, Tensor& dst) {
        const auto it = std::find_if(state.begin(), state.end(), [&](const auto& e) { return e.first == name; });
        if (it == state.end()) throw std::invalid_argument("restore: missing tensor '" + name + "'");
        if (it->second.shape() != dst.shape())
            throw ShapeError("restore: tensor '" + name + "' has shape " + to_string(it->second.shape()) +
                             ", expected " + to_string(dst.shape()));
        dst = it->second;
    };
    for (auto& p : parameters()) {
        assign(p.name, p.var.value());
        p.var.zero_grad();
    }
    for (auto& b : buffers()) assign(b.name, *b.tensor);
}

std::vector<std::pair<Index, Index>> partition_extents(Index length, Index parts) {
    if (parts < 1 || parts > length)
        throw ShapeError("partition: cannot split " + std::to_string(length) + " cells into " +
                         std::to_string(parts) + " parts");
    const Index base = length / parts;
    const Index extra = length % parts;
    std::vector<std::pair<Index, Index>> ext;
    Index offset = 0;
    for (Index i = 0; i < parts; ++i) {
        const Index size = base + (i < extra ? 1 : 0);
        ext.emplace_back(offset, size);
        offset += size;
    }
    return ext;
}

std::vector<Variable> partition(const Variable& feature_map, Index rows, Index cols) {
    const Shape& s = feature_map.shape();
    if (s.size() < 3) throw ShapeError("partition: expected an image-shaped tensor, got " + to_string(s));
    const Index h = s[s.size() - 2], w = s[s.size() - 1];
    if (rows > h || cols > w) throw ShapeError("partition: grid larger than feature map");
    std::vector<Variable> blocks;
    for (const auto& [r0, rh] : partition_extents(h, rows))
        for (const auto& [c0, cw] : partition_extents(w, cols)) blocks.push_back(crop(feature_map, r0, rh, c0, cw));
    return blocks;
}

LossTerms total_loss(double lambda, const Variable& logits_u, const std::vector<Variable>& logits_cci,
                     std::span<const int> labels) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("total_loss: lambda must lie in [0, 1]");
    if (logits_cci.empty()) throw std::invalid_argument("total_loss: no context-branch logits");
    LossTerms t;
    t.l_u = softmax_cross_entropy(logits_u, labels);
    for (const auto& z : logits_cci) t.l_i.push_back(softmax_cross_entropy(z, labels));
    t.l_l = t.l_i.front();
    for (std::size_t i = 1; i < t.l_i.size(); ++i) t.l_l = add(t.l_l, t.l_i[i]);
    t.total = add(scale(t.l_u, lambda), scale(t.l_l, 1.0 - lambda));
    return t;
}

double combine_losses(double lambda, double l_u, std::span<const double> l_i) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("combine_losses: lambda must lie in [0, 1]");
    double l_l = 0.0;
    for (double v : l_i) l_l += v;
    return lambda * l_u + (1.0 - lambda) * l_l;
}

int argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax: empty input");
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace scanfer
