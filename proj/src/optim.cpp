#include "scanfer/optim.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace scanfer {

void SgdConfig::validate() const {
    if (!(lr_backbone > 0.0) || !(lr_heads > 0.0)) throw std::invalid_argument("sgd: learning rates must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight decay must be non-negative");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
        throw std::invalid_argument("sgd: decay factor must lie in (0, 1]");
}

double lr_at_epoch(double lr0, int epoch, double factor) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
    return lr0 * std::pow(factor, epoch);
}

double SgdState::lr(ParamGroup group) const {
    const double lr0 = group == ParamGroup::backbone ? config.lr_backbone : config.lr_heads;
    return lr_at_epoch(lr0, epoch, config.decay_factor);
}

void sgd_step(SgdState& state, const std::vector<Parameter>& params) {
    for (const auto& p : params)
        if (p.var.requires_grad() && !p.var.has_grad())
            throw std::logic_error("sgd_step: trainable parameter '" + p.name + "' has no gradient");
    const double mu = state.config.momentum;
    const double wd = state.config.weight_decay;
    for (auto p : params) {
        if (!p.var.requires_grad()) continue;
        Tensor& theta = p.var.value();
        auto [it, fresh] = state.velocity.try_emplace(p.name, theta.shape(), 0.0);
        Tensor& v = it->second;
        if (v.shape() != theta.shape()) throw std::logic_error("sgd_step: velocity shape mismatch for " + p.name);
        Eigen::VectorXd g = p.var.grad().data();
        if (p.decay && wd != 0.0) g += wd * theta.data();
        v.data() = mu * v.data() + g;
        theta.data() -= state.lr(p.group) * v.data();
        p.var.zero_grad();
    }
}

EpochStats train_epoch(FerModel& model, const ImageSet& data, ImbalancedSampler& sampler, Rng& augment_rng,
                       SgdState& state, const TrainOptions& options) {
    if (data.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
    if (options.batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be positive");
    const std::size_t n = data.size();
    const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
    const auto params = model.parameters();

    EpochStats stats;
    std::size_t seen = 0, correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t size = std::min(options.batch_size, n - b * options.batch_size);
        const auto idx = sampler.next(size);
        ImageSet batch;
        for (std::size_t i : idx) {
            const Sample s = augment({data.images[i], data.labels[i]}, augment_rng, options.augment);
            batch.images.push_back(s.pixels);
            batch.labels.push_back(s.label);
        }
        std::vector<std::size_t> all(size);
        for (std::size_t i = 0; i < size; ++i) all[i] = i;
        auto out = model.forward(batch.batch(all), batch.labels, Mode::train);
        backward(out.loss->total);
        sgd_step(state, params);
        ++stats.steps;

        const double w = static_cast<double>(size);
        stats.loss += w * out.loss->total.value().item();
        stats.l_u += w * out.loss->l_u.value().item();
        stats.l_l += w * out.loss->l_l.value().item();
        const Tensor& logits = out.logits_u.value();
        const Index k = logits.dim(1);
        for (std::size_t i = 0; i < size; ++i) {
            const auto row = logits.values().subspan(i * static_cast<std::size_t>(k), static_cast<std::size_t>(k));
            if (argmax(row) == batch.labels[i]) ++correct;
        }
        seen += size;
    }
    const double total = static_cast<double>(seen);
    stats.loss /= total;
    stats.l_u /= total;
    stats.l_l /= total;
    stats.train_acc = static_cast<double>(correct) / total;
    return stats;
}

std::string format_history_line(const EpochRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g", r.epoch,
                  r.lr_backbone, r.lr_heads, r.stats.loss, r.stats.l_u, r.stats.l_l, r.stats.train_acc,
                  r.val.macro_f1, r.val.accuracy, r.val.overall);
    return buf;
}

FitResult fit(FerModel& model, const ImageSet& train, const ImageSet& val, const FitOptions& options,
              const EpochCallback& on_epoch) {
    options.sgd.validate();
    if (options.epochs < 0) throw std::invalid_argument("fit: epochs must be non-negative");
    FitResult result;
    result.state.config = options.sgd;
    result.best = model.snapshot();
    if (options.epochs == 0) return result;
    if (train.size() == 0) throw std::invalid_argument("fit: empty training set");

    Rng seeder(options.seed);
    std::vector<int> labels = train.labels;
    if (!options.balanced_sampler) std::fill(labels.begin(), labels.end(), 0);
    ImbalancedSampler sampler(labels, seeder());
    Rng augment_rng(seeder());
    const ImageSet& val_set = val.size() ? val : train;

    for (int e = 0; e < options.epochs; ++e) {
        result.state.epoch = e;
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr_backbone = result.state.lr(ParamGroup::backbone);
        rec.lr_heads = result.state.lr(ParamGroup::heads);
        rec.stats = train_epoch(model, train, sampler, augment_rng, result.state, options.train);
        rec.val = evaluate(model, val_set);
        if (result.best_epoch == 0 || rec.val.overall > result.best_overall) {
            result.best_overall = rec.val.overall;
            result.best_epoch = rec.epoch;
            result.best = model.snapshot();
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.state.epoch = options.epochs;
    model.restore(result.best);
    return result;
}

}  // namespace scanfer
