#pragma once

#include "scanfer/attention.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scanfer {

inline constexpr int kNumExpressions = 7;

/// Stack of conv3x3(stride 2) -> BN -> PReLU stages with two tap points.
struct BackboneConfig {
    Index input_size = 40;
    std::vector<Index> channels{32, 64};  // one entry per stage
    Index tap_u = 0;                      // stage feeding the local/global branch
    Index tap_l = 1;                      // stage feeding the complementary-context branch

    static BackboneConfig desk();
    /// 224 input, 512 x 28 x 28 and 1024 x 14 x 14 taps.
    static BackboneConfig paper();

    /// Spatial size after `stage` (0-based).
    [[nodiscard]] Index spatial_after(Index stage) const;
    void validate() const;
};

struct ModelConfig {
    BackboneConfig backbone;
    Index grid_rows = 5;  // local patches m = grid_rows * grid_cols
    Index grid_cols = 5;
    Index cci_rows = 2;  // context blocks k = cci_rows * cci_cols
    Index cci_cols = 2;
    Index cci_hidden = 256;
    double lambda = 0.2;
    int num_classes = kNumExpressions;
    int eca_kernel = 0;  // 0 selects the adaptive size

    [[nodiscard]] Index patches() const { return grid_rows * grid_cols; }
    [[nodiscard]] Index blocks() const { return cci_rows * cci_cols; }
    void validate() const;
};

struct Dense {
    Variable weight;  // out x in
    Variable bias;    // out

    static Dense create(Index in, Index out, Rng& rng);
    Variable operator()(const Variable& x) const { return linear(x, weight, bias); }
};

struct BackboneStage {
    Variable conv_weight;
    Variable conv_bias;  // fixed zeros, not trained
    Variable bn_gamma;
    Variable bn_beta;
    Variable prelu_slope;
    RunningStats bn_stats;
};

enum class ParamGroup { backbone, heads };

struct Parameter {
    std::string name;
    Variable var;
    ParamGroup group;
    bool decay;  // weight decay applies (conv/linear weights only)
};

struct Buffer {
    std::string name;
    Tensor* tensor;
};

using StateDict = std::vector<std::pair<std::string, Tensor>>;

struct Taps {
    Variable f_u;
    Variable f_l;
};

struct LocalGlobalOutput {
    std::vector<Variable> patch_descriptors;  // GAP of SCAN output per patch, grid order
    Variable v_l;
    Variable v_g;
    Variable logits;
};

struct CciOutput {
    std::vector<Variable> h;       // GAP per block
    std::vector<Variable> logits;  // one per block
};

struct LossTerms {
    Variable l_u;
    std::vector<Variable> l_i;
    Variable l_l;
    Variable total;
};

struct ForwardOutput {
    Taps taps;
    Variable logits_u;
    std::vector<Variable> logits_cci;
    Variable v_l;
    Variable v_g;
    std::vector<Variable> h;
    std::optional<LossTerms> loss;
};

/// Two-branch expression classifier: spatio-channel attention over local
/// patches and the whole map on the shallow tap, channel attention plus
/// block pooling on the deep tap.
///
/// Parameters are Variables with shared nodes, so copying a FerModel aliases
/// its weights. Use snapshot()/restore() for independent copies.
class FerModel {
public:
    static FerModel create(const ModelConfig& config, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }

    Taps backbone_forward(const Variable& images, Mode mode);
    LocalGlobalOutput local_global_branch(const Variable& f_u, Mode mode);
    CciOutput cci_branch(const Variable& f_l, Mode mode);

    /// Images are 3 x S x S or N x 3 x S x S. Loss terms are batch means and
    /// are computed only when labels are given.
    ForwardOutput forward(const Tensor& images, std::span<const int> labels, Mode mode);
    ForwardOutput forward(const Tensor& images, Mode mode) { return forward(images, {}, mode); }

    /// Index of the largest attention-branch logit, lowest index on ties.
    int predict(const Tensor& image);
    std::vector<int> predict_batch(const Tensor& images);

    [[nodiscard]] std::vector<Parameter> parameters() const;
    [[nodiscard]] std::vector<Buffer> buffers();
    [[nodiscard]] StateDict snapshot() const;
    void restore(const StateDict& state);

    std::vector<BackboneStage> stages;
    ScanBlock scan;
    EcaBlock eca;
    Dense head_u;
    std::vector<Dense> cci_projections;
    std::vector<Dense> cci_heads;

private:
    ModelConfig config_;
};

/// Ceil-first split of `length` into `parts` extents: (offset, size) pairs.
std::vector<std::pair<Index, Index>> partition_extents(Index length, Index parts);

/// Non-overlapping rows x cols tiling of the spatial axes, row-major order.
std::vector<Variable> partition(const Variable& feature_map, Index rows, Index cols);

/// L = lambda * L_u + (1 - lambda) * sum(L_i).
LossTerms total_loss(double lambda, const Variable& logits_u, const std::vector<Variable>& logits_cci,
                     std::span<const int> labels);
double combine_losses(double lambda, double l_u, std::span<const double> l_i);

/// First index of the maximum.
int argmax(std::span<const double> values);

}  // namespace scanfer
