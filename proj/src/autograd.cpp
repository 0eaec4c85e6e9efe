#include "scanfer/autograd.hpp"

#include "scanfer/errors.hpp"

#include <algorithm>
#include <unordered_set>

namespace scanfer {

namespace {

// Creation order doubles as a topological order: inputs always exist before
// the op that consumes them.
thread_local std::uint64_t next_seq = 1;

}  // namespace

void detail::Node::accumulate(const Eigen::Ref<const Eigen::VectorXd>& g) {
    if (grad.empty()) {
        grad = Tensor(value.shape(), Eigen::VectorXd(g));
    } else {
        grad.data() += g;
    }
}

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->seq = next_seq++;
}

Tensor Variable::grad() const {
    if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
    return node_->grad;
}

Variable Variable::make_result(Tensor value, std::vector<Variable> inputs,
                               std::function<void(const detail::Node&)> backward_fn) {
    Variable out(std::move(value), false);
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Variable& v) { return v.requires_grad(); });
    if (any) {
        out.node_->requires_grad = true;
        out.node_->inputs.reserve(inputs.size());
        for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
        out.node_->backward = std::move(backward_fn);
    }
    return out;
}

Tape Tape::record(const Variable& root) {
    Tape tape;
    tape.root_ = root.handle();
    std::vector<detail::Node*> stack{root.handle().get()};
    std::unordered_set<const detail::Node*> seen;
    std::vector<detail::Node*> nodes;
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        if (n->backward) nodes.push_back(n);
        for (const auto& in : n->inputs) stack.push_back(in.get());
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq < b->seq; });
    tape.ops_ = std::move(nodes);
    return tape;
}

void Tape::backward() {
    if (!root_) return;
    if (root_->value.size() != 1)
        throw ShapeError("backward requires a scalar root, got shape " + to_string(root_->value.shape()));
    if (!root_->requires_grad) return;
    for (auto* op : ops_) op->grad = Tensor();
    if (!root_->backward) {
        root_->accumulate(Eigen::VectorXd::Ones(1));
        return;
    }
    root_->grad = Tensor(root_->value.shape(), 1.0);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        const detail::Node* op = *it;
        if (op->grad.empty()) continue;
        op->backward(*op);
    }
}

void backward(const Variable& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward on undefined variable");
    if (loss.value().size() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    Tape::record(loss).backward();
}

}  // namespace scanfer
