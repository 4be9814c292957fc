#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A BasicTape records every operation as a node holding its value, an
// accumulated gradient and a backward rule. Nodes are appended in evaluation
// order, so parents always precede children and backward() is a single
// reverse sweep. Leaves created from a BasicTensor push their gradient into
// the tensor's `grad` at the end of the sweep.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpfold::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

template <typename Scalar>
struct BasicTensor {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = true;

  BasicTensor() = default;
  BasicTensor(std::string n, Matrix<Scalar> v, bool trainable = true)
      : name(std::move(n)), value(std::move(v)), requires_grad(trainable) {}

  std::vector<Index> shape() const { return {value.rows(), value.cols()}; }
  Index size() const { return value.size(); }
  bool has_grad() const { return grad.rows() == value.rows() && grad.cols() == value.cols() && grad.size() > 0; }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  void clear_grad() { grad.resize(0, 0); }
};

template <typename Scalar>
class BasicTape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, Index id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw std::invalid_argument("item() on a non-scalar");
    return value()(0, 0);
  }
  BasicTape<Scalar>* tape() const { return tape_; }
  Index id() const { return id_; }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  Index id_ = -1;
};

template <typename Scalar>
class BasicTape {
 public:
  using Mat = Matrix<Scalar>;
  using Var = BasicVar<Scalar>;
  using Tensor = BasicTensor<Scalar>;
  using BackwardFn = std::function<void(BasicTape&, const Mat&)>;

  // With record_gradients = false the tape only evaluates: leaves are treated
  // as constants and no backward rules are kept.
  explicit BasicTape(bool record_gradients = true) : record_(record_gradients) {}

  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var(this, static_cast<Index>(nodes_.size()) - 1);
  }

  Var leaf(Tensor& tensor) {
    const bool tracked = record_ && tensor.requires_grad;
    nodes_.push_back(Node{tensor.value, {}, {}, tracked ? &tensor : nullptr, tracked});
    return Var(this, static_cast<Index>(nodes_.size()) - 1);
  }

  // Appends an op result. The backward rule is kept only when some parent
  // needs a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record_impl(std::move(value), parents.begin(), parents.end(), std::move(backward));
  }

  template <typename It>
  Var record_range(Mat value, It first, It last, BackwardFn backward) {
    return record_impl(std::move(value), first, last, std::move(backward));
  }

  const Mat& value(Var v) const { return nodes_[check(v)].value; }
  bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[check(v)];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps in reverse insertion order. Leaf
  // gradients are added onto BasicTensor::grad, so repeated calls accumulate.
  void backward(Var loss) {
    const Index root = check(loss);
    if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1)
      throw std::invalid_argument("backward() needs a scalar (1x1) loss");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[root].needs_grad) return;
    nodes_[root].grad = Mat::Ones(1, 1);
    for (Index i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) {
        n.backward(*this, n.grad);
      } else if (n.leaf != nullptr) {
        if (n.leaf->has_grad())
          n.leaf->grad += n.grad;
        else
          n.leaf->grad = n.grad;
      }
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    Tensor* leaf = nullptr;
    bool needs_grad = false;
  };

  template <typename It>
  Var record_impl(Mat value, It first, It last, BackwardFn backward) {
    bool any = false;
    for (It it = first; it != last; ++it) {
      if (it->tape() != this) throw std::invalid_argument("operands recorded on different tapes");
      any = any || nodes_[static_cast<std::size_t>(it->id())].needs_grad;
    }
    if (!any) backward = nullptr;
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), nullptr, any});
    return Var(this, static_cast<Index>(nodes_.size()) - 1);
  }

  std::size_t check(Var v) const {
    if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size())
      throw std::invalid_argument("variable does not belong to this tape");
    return static_cast<std::size_t>(v.id());
  }

  std::vector<Node> nodes_;
  bool record_;
};

using Tensor = BasicTensor<double>;
using Tape = BasicTape<double>;
using Var = BasicVar<double>;

template <typename Scalar>
void backward(BasicVar<Scalar> loss) {
  loss.tape()->backward(loss);
}

}  // namespace hpfold::ad
