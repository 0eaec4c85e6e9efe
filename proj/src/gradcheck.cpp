#include "scanfer/gradcheck.hpp"

#include "scanfer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scanfer {

namespace {

double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

std::vector<Index> all_indices(Index n) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    return idx;
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h, const std::vector<Index>& coordinates) {
    if (!(h > 0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    Variable leaf(x, true);
    backward(f(leaf));
    const Tensor analytic = leaf.grad();

    const std::vector<Index> idx = coordinates.empty() ? all_indices(x.size()) : coordinates;
    double worst = 0.0;
    Tensor probe = x;
    for (Index i : idx) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(Variable(probe)).value().item();
        probe[i] = orig - h;
        const double down = f(Variable(probe)).value().item();
        probe[i] = orig;
        worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

std::vector<ParameterCheck> check_parameters(const std::function<Variable()>& loss,
                                             const std::vector<NamedVariable>& params, double h,
                                             Index max_coords, std::uint64_t seed) {
    for (auto p : params) p.var.zero_grad();
    backward(loss());
    Rng rng(seed);
    std::vector<ParameterCheck> report;
    for (const auto& p : params) {
        const Tensor analytic = p.var.grad();
        Variable handle = p.var;
        Tensor& value = handle.value();
        std::vector<Index> idx;
        if (value.size() <= max_coords) {
            idx = all_indices(value.size());
        } else {
            for (Index i = 0; i < max_coords; ++i) idx.push_back(static_cast<Index>(rng.below(value.size())));
        }
        ParameterCheck check{p.name, static_cast<Index>(idx.size()), 0.0};
        auto traced = [&](double v, Index i, std::uint64_t& digest) {
            value[i] = v;
            branch_trace::start();
            const double l = loss().value().item();
            digest = branch_trace::stop();
            return l;
        };
        for (Index i : idx) {
            const double orig = value[i];
            double step = h;
            bool smooth = false;
            double numeric = 0.0;
            for (int attempt = 0; attempt < 4 && !smooth; ++attempt, step /= 10.0) {
                std::uint64_t d_up = 0, d_down = 0;
                const double up = traced(orig + step, i, d_up);
                const double down = traced(orig - step, i, d_down);
                smooth = d_up == d_down;
                numeric = (up - down) / (2.0 * step);
            }
            value[i] = orig;
            if (step < h / 10.0) ++check.refined;
            if (!smooth) {
                ++check.skipped;
                continue;
            }
            check.max_rel_error = std::max(check.max_rel_error, rel_error(analytic[i], numeric));
        }
        report.push_back(check);
    }
    return report;
}

}  // namespace scanfer
