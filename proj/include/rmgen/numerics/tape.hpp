#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "rmgen/numerics/tensor.hpp"

namespace rmgen::num {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Record of primitive operations for reverse-mode differentiation. A tape is
// owned by one computation; it is neither copyable nor shared.
//
// With `record == false` no adjoint closures are stored, which turns every op
// into a plain forward evaluation.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  // Non-owning leaf; `external` must outlive the tape.
  Var leaf(const Tensor& external, bool requires_grad);
  // Owned leaves.
  Var constant(Tensor value);
  Var variable(Tensor value);

  const Tensor& value(const Var& v) const { return *nodes_[v.id()].value; }
  const Tensor& value_of(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Seeds d(out)/d(out) = 1 and replays adjoints in reverse order.
  void backward(const Var& out);

  // Gradient accumulated for `v`; an all-zero tensor if `v` received none.
  Tensor grad(const Var& v) const;

  // Zero-initialised on first access.
  Tensor& grad_buffer(std::size_t id);

  // Used by primitive implementations. Checks `value` for non-finite entries
  // and throws NumericError naming `op` if any are found.
  Var record(Tensor value, std::span<const Var> inputs, Backward fn,
             std::string_view op);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn,
             std::string_view op) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn), op);
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::unique_ptr<Tensor> owned;
    const Tensor* value = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node node);

  bool record_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace rmgen::num
