#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cmfuse {

using Shape = std::vector<int64_t>;
using Rng = std::mt19937;

inline int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

inline std::vector<int64_t> row_major_strides(const Shape& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i) {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    return strides;
}

// Thread-local switch: when disabled, ops skip tape construction entirely.
class GradMode {
  public:
    static bool enabled() { return enabled_(); }
    static void set(bool on) { enabled_() = on; }

  private:
    static bool& enabled_() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
  public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

template <typename S>
class Tensor;

// One record of the backward graph: the op's inputs and its local rule.
// The rule receives the op's output (to read its gradient) and accumulates
// into the inputs' gradient buffers.
template <typename S>
struct TapeNode {
    std::vector<Tensor<S>> inputs;
    std::function<void(const Tensor<S>& out)> backward;
};

template <typename S>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<S>>(numel_of(shape_), S(0))),
          requires_grad_(requires_grad) {
        if (requires_grad_) grad_ = std::make_shared<std::vector<S>>(numel(), S(0));
    }

    Tensor(Shape shape, std::vector<S> values, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<S>>(std::move(values))),
          requires_grad_(requires_grad) {
        if (static_cast<int64_t>(data_->size()) != numel_of(shape_)) {
            throw std::invalid_argument("tensor: " + std::to_string(data_->size()) +
                                        " values do not fill shape " + shape_str(shape_));
        }
        if (requires_grad_) grad_ = std::make_shared<std::vector<S>>(numel(), S(0));
    }

    static Tensor scalar(S value, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<S>{value}, requires_grad);
    }

    static Tensor full(Shape shape, S value, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        for (auto& v : t.data()) v = value;
        return t;
    }

    static Tensor uniform(Shape shape, S lo, S hi, Rng& rng, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                    static_cast<double>(hi));
        for (auto& v : t.data()) v = static_cast<S>(dist(rng));
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    int64_t extent(int64_t axis) const { return shape_.at(static_cast<size_t>(axis)); }

    std::vector<S>& data() { return *data_; }
    const std::vector<S>& data() const { return *data_; }

    bool requires_grad() const { return requires_grad_; }

    std::vector<S>& grad() const {
        if (!grad_) throw std::logic_error("tensor has no gradient buffer");
        return *grad_;
    }

    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), S(0));
    }

    S item() const {
        if (numel() != 1) {
            throw std::invalid_argument("item: tensor " + shape_str(shape_) + " is not scalar");
        }
        return (*data_)[0];
    }

    // Leaf = a gradient endpoint (parameter or explicit input); op outputs carry a node.
    bool is_leaf() const { return requires_grad_ && !node; }

    std::shared_ptr<TapeNode<S>> node;

  private:
    Shape shape_;
    std::shared_ptr<std::vector<S>> data_;
    mutable std::shared_ptr<std::vector<S>> grad_;
    bool requires_grad_ = false;
};

template <typename S>
bool any_requires_grad(std::initializer_list<Tensor<S>> ts) {
    if (!GradMode::enabled()) return false;
    for (const auto& t : ts) {
        if (t.requires_grad()) return true;
    }
    return false;
}

// Attaches a tape node to `out` when it participates in the graph.
template <typename S, typename F>
void attach_node(Tensor<S>& out, std::vector<Tensor<S>> inputs, F&& backward) {
    if (!out.requires_grad()) return;
    auto node = std::make_shared<TapeNode<S>>();
    node->inputs = std::move(inputs);
    node->backward = std::forward<F>(backward);
    out.node = std::move(node);
}

// Reverse-mode sweep from a scalar loss. Gradients of leaves accumulate
// across calls; gradients of op outputs are rebuilt per sweep.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    if (!loss.node) {
        loss.grad()[0] += S(1);
        return;
    }

    // Postorder DFS over tape nodes gives a topological order.
    std::vector<Tensor<S>> order;
    std::unordered_set<const TapeNode<S>*> visited;
    struct Frame {
        Tensor<S> tensor;
        size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({loss, 0});
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        const size_t top = stack.size() - 1;
        // inputs live on the heap-owned node, safe across stack growth
        const auto& inputs = stack[top].tensor.node->inputs;
        bool descended = false;
        while (stack[top].next_input < inputs.size()) {
            const Tensor<S>& in = inputs[stack[top].next_input++];
            if (in.node && !visited.count(in.node.get())) {
                visited.insert(in.node.get());
                stack.push_back({in, 0});
                descended = true;
                break;
            }
        }
        if (!descended) {
            order.push_back(stack[top].tensor);
            stack.pop_back();
        }
    }

    for (auto& t : order) t.zero_grad();
    loss.grad()[0] = S(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        it->node->backward(*it);
    }
}

}  // namespace cmfuse
