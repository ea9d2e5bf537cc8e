#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/numgrad/tensor.hpp"

namespace tagforge::numgrad {

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape, 0.0) {}

  void zero_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape, 0.0);
    else grad.fill(0.0);
  }
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

/// Records operations in execution order (which is a topological order) and
/// replays their gradient rules in exact reverse. Confined to one thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, nullptr, nullptr});
    return Var{this, nodes_.size() - 1};
  }

  // The parameter's storage is referenced, not copied; it must stay unchanged
  // while the tape is alive. With gradients disabled it acts as a constant.
  Var param(Parameter& p) {
    bool track = grad_enabled_;
    nodes_.push_back(Node{Tensor(Shape{0}), {}, track, nullptr, track ? &p : nullptr, &p.value});
    return Var{this, nodes_.size() - 1};
  }

  // Records an op output. The gradient rule is kept only when some input
  // needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
    bool track = false;
    if (grad_enabled_) {
      for (const Var& v : inputs) track = track || nodes_[v.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, track, track ? std::move(fn) : nullptr, nullptr, nullptr});
    return Var{this, nodes_.size() - 1};
  }

  Var record(Tensor value, const std::vector<Var>& inputs, Backward fn) {
    bool track = false;
    if (grad_enabled_) {
      for (const Var& v : inputs) track = track || nodes_[v.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, track, track ? std::move(fn) : nullptr, nullptr, nullptr});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const {
    if (id >= nodes_.size()) throw Error(ErrorKind::Contract, "variable read after its tape was cleared");
    return nodes_[id].get();
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Zero-initialized on first access.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    const Tensor& v = n.get();
    if (!n.grad_ready) {
      n.grad = Tensor(v.shape, 0.0);
      n.grad_ready = true;
    }
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1, runs every gradient rule in reverse, adds
  /// leaf gradients into their Parameters, then clears the tape.
  void backward(Var loss) {
    if (loss.tape != this) throw Error(ErrorKind::Contract, "loss is not on this tape");
    if (nodes_[loss.id].get().size() != 1) {
      throw Error(ErrorKind::Contract,
                  "backward needs a scalar loss, got shape " + shape_str(nodes_[loss.id].get().shape));
    }
    if (nodes_[loss.id].requires_grad) {
      grad(loss.id).data[0] = 1.0;
      for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.grad_ready) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) {
          Parameter& p = *n.param;
          if (p.grad.shape != p.value.shape) p.grad = Tensor(p.value.shape, 0.0);
          for (std::size_t k = 0; k < p.grad.data.size(); ++k) p.grad.data[k] += n.grad.data[k];
        }
      }
    }
    clear();
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  void warn(std::string message) { warnings_.push_back(std::move(message)); }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    Backward backward;
    Parameter* param;
    const Tensor* external;
    bool grad_ready = false;

    const Tensor& get() const { return external != nullptr ? *external : value; }
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::string> warnings_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace tagforge::numgrad
