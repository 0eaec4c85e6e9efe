#pragma once

#include "scanfer/data.hpp"
#include "scanfer/metrics.hpp"
#include "scanfer/model.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace scanfer {

struct SgdConfig {
    double lr_backbone = 1e-4;
    double lr_heads = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    double decay_factor = 0.95;  // per-epoch learning-rate multiplier

    void validate() const;
};

/// lr0 * factor^epoch.
double lr_at_epoch(double lr0, int epoch, double factor = 0.95);

struct SgdState {
    SgdConfig config;
    int epoch = 0;
    std::map<std::string, Tensor> velocity;  // keyed by parameter name, zero until first step

    [[nodiscard]] double lr(ParamGroup group) const;
};

/// Heavy-ball update with decay folded into the gradient:
///   v <- momentum * v + g + wd * theta;  theta <- theta - lr * v
/// Decay applies only to parameters flagged for it. Clears grads afterwards.
void sgd_step(SgdState& state, const std::vector<Parameter>& params);

struct TrainOptions {
    std::size_t batch_size = 64;
    AugmentPolicy augment;
};

struct EpochStats {
    double loss = 0.0;
    double l_u = 0.0;
    double l_l = 0.0;
    double train_acc = 0.0;
    std::size_t steps = 0;  // optimizer updates taken
};

/// ceil(N / batch) sampler-drawn batches of forward (train), backward, step.
EpochStats train_epoch(FerModel& model, const ImageSet& data, ImbalancedSampler& sampler, Rng& augment_rng,
                       SgdState& state, const TrainOptions& options);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double lr_backbone = 0.0;
    double lr_heads = 0.0;
    EpochStats stats;
    EvalReport val;
};

/// Tab-separated: epoch, lr_backbone, lr_heads, L, L_u, L_l, train_acc,
/// val_f1, val_acc, val_overall.
std::string format_history_line(const EpochRecord& record);

struct FitOptions {
    int epochs = 20;
    std::uint64_t seed = 1;
    bool balanced_sampler = true;
    TrainOptions train;
    SgdConfig sgd;
};

struct FitResult {
    std::vector<EpochRecord> history;
    StateDict best;
    int best_epoch = 0;  // 0 when no epoch ran
    double best_overall = 0.0;
    SgdState state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs `epochs` epochs, evaluating the validation overall score after each
/// and keeping the best snapshot, which is restored into `model` on return.
FitResult fit(FerModel& model, const ImageSet& train, const ImageSet& val, const FitOptions& options,
              const EpochCallback& on_epoch = {});

}  // namespace scanfer
