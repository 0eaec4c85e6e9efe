#pragma once

#include "scanfer/autograd.hpp"
#include "scanfer/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace scanfer {

using ScalarFn = std::function<Variable(const Variable&)>;

/// Max over elements of |analytic - central difference| / (|analytic| + 1e-8).
///
/// `f` must build its result from the Variable it is given. When
/// `coordinates` is non-empty only those flat indices are perturbed.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                         const std::vector<Index>& coordinates = {});

struct NamedVariable {
    std::string name;
    Variable var;
};

struct ParameterCheck {
    std::string name;
    Index checked = 0;
    double max_rel_error = 0.0;
    Index refined = 0;  // coordinates re-measured with a smaller step after crossing a kink
    Index skipped = 0;  // no step down to h / 1000 stayed on one smooth piece
};

/// Finite-difference audit of `loss` with respect to parameters that are
/// mutated in place. Tensors with at most `max_coords` elements are checked
/// exhaustively; larger ones at `max_coords` seeded random coordinates.
///
/// When the branch digests at theta + h and theta - h differ, the central
/// difference straddles a non-differentiable point and says nothing about
/// the derivative; the step is divided by 10 until both sides share a piece.
std::vector<ParameterCheck> check_parameters(const std::function<Variable()>& loss,
                                             const std::vector<NamedVariable>& params, double h = 1e-5,
                                             Index max_coords = 16, std::uint64_t seed = 1);

}  // namespace scanfer
