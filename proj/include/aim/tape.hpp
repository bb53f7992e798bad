#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aim/tensor.hpp"

namespace aim::diff {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

enum class Op {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,
  kAddRowBias,
  kRelu,
  kTanh,
  kScale,
  kGroupMeanPool,
  kEmbedding,
  kConcatCols,
  kSoftmaxCrossEntropy,
  kSumSquares,
};

// What backward() does with gradients that reach parameter leaves.
enum class ParamGrads {
  kWrite,  // overwrite the parameter tensor's grad slot
  kKeep,   // leave them on the tape only (concurrent evaluation over shared parameters)
};

// Records primitive applications in execution order and replays them in
// reverse to compute exact gradients. A tape is single-threaded; distinct
// tapes may read the same parameter tensors concurrently when built with
// ParamGrads::kKeep.
class Tape {
 public:
  explicit Tape(ParamGrads mode = ParamGrads::kWrite) : mode_(mode) {}

  Var constant(Tensor value);
  // Leaf bound to an externally owned tensor. The tensor must outlive the tape
  // and must not be mutated while the tape is alive.
  Var parameter(Tensor& param);
  // Read-only binding; only valid on ParamGrads::kKeep tapes.
  Var parameter(const Tensor& param);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row_bias(Var x, Var bias);
  Var relu(Var x);
  Var tanh(Var x);
  Var scale(Var x, double factor);
  // [r x d] -> [d]
  Var mean_pool(Var x);
  // [(b*g) x d] -> [b x d], mean over consecutive groups of g rows.
  Var group_mean_pool(Var x, std::size_t group);
  Var embedding(Var table, std::span<const int> ids);
  Var concat_cols(Var a, Var b);
  // Logits [K] or [B x K]; mean of -log softmax(row)[label] over rows.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  Var sum_squares(Var x);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() loss w.r.t. v; zeros if v was unreachable.
  std::span<const double> grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }

 private:
  struct Node {
    Op op = Op::kConstant;
    std::size_t in0 = kNone;
    std::size_t in1 = kNone;
    Tensor value;
    Tensor* param = nullptr;
    std::vector<int> ids;
    std::vector<double> cache;
    double factor = 0.0;
    std::size_t group = 0;
  };
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  Var push(Node node);
  const Node& node(Var v) const;
  void backward_node(std::size_t index);

  ParamGrads mode_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace aim::diff
