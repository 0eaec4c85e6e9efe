#pragma once

#include "scanfer/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace scanfer {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    /// Propagates this node's grad into its inputs' grads.
    std::function<void(const Node&)> backward;

    void accumulate(const Eigen::Ref<const Eigen::VectorXd>& g);
};

}  // namespace detail

/// Handle to a value in the differentiation graph.
///
/// Copies share the same node: mutating value() through one handle is
/// visible through all of them, which is how parameters are updated in place.
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor value, bool requires_grad = false);

    [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }

    [[nodiscard]] Tensor& value() { return node_->value; }
    [[nodiscard]] const Tensor& value() const { return node_->value; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }

    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Accumulated gradient; a zero tensor of matching shape if none yet.
    [[nodiscard]] Tensor grad() const;
    [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }

    /// Same value, cut from the graph.
    [[nodiscard]] Variable detach() const { return Variable(node_->value, false); }

    [[nodiscard]] const detail::Node* node() const noexcept { return node_.get(); }

    /// Builds an op result. Records inputs and the backward rule only if some
    /// input requires a gradient.
    static Variable make_result(Tensor value, std::vector<Variable> inputs,
                                std::function<void(const detail::Node&)> backward);

    /// Input node access for backward closures.
    [[nodiscard]] const std::shared_ptr<detail::Node>& handle() const noexcept { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Ordered record of the differentiable operations reachable from a root.
///
/// Entries are sorted by creation sequence, so every operation appears after
/// the operations that produced its inputs.
class Tape {
public:
    static Tape record(const Variable& root);

    [[nodiscard]] const std::vector<detail::Node*>& operations() const noexcept { return ops_; }

    /// Seeds the root with gradient one and visits each operation once in
    /// reverse order. Non-leaf grads are reset first; leaf grads accumulate.
    void backward();

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> ops_;
};

/// Reverse-mode pass from a scalar loss into every leaf that requires grad.
void backward(const Variable& loss);

}  // namespace scanfer
