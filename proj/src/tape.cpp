#include "aim/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aim/error.hpp"
#include "aim/kernels.hpp"

namespace aim::diff {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + t.shape_string());
  }
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Tensor& param) {
  Node n;
  n.op = Op::kParameter;
  n.value = Tensor(param.shape(), std::vector<double>(param.data().begin(), param.data().end()));
  n.param = &param;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& param) {
  if (mode_ == ParamGrads::kWrite) {
    throw ContractError("read-only parameter bound to a tape that writes parameter gradients");
  }
  Node n;
  n.op = Op::kParameter;
  n.value = Tensor(param.shape(), std::vector<double>(param.data().begin(), param.data().end()));
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + ta.shape_string() + " x " + tb.shape_string());
  }
  const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  kernels::gemm_nn(ta.data(), tb.data(), out.data(), m, k, n);
  Node nd;
  nd.op = Op::kMatmul;
  nd.in0 = a.id;
  nd.in1 = b.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.shape() != tb.shape()) {
    throw DimensionError("add shape mismatch: " + ta.shape_string() + " vs " + tb.shape_string());
  }
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  Node nd;
  nd.op = Op::kAdd;
  nd.in0 = a.id;
  nd.in1 = b.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::add_row_bias(Var x, Var bias) {
  const Tensor& tx = node(x).value;
  const Tensor& tb = node(bias).value;
  require_matrix(tx, "add_row_bias");
  if (tb.size() != tx.cols()) {
    throw DimensionError("bias " + tb.shape_string() + " does not match rows of " + tx.shape_string());
  }
  Tensor out(tx.shape());
  const std::size_t rows = tx.rows(), cols = tx.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = tx[r * cols + c] + tb[c];
  }
  Node nd;
  nd.op = Op::kAddRowBias;
  nd.in0 = x.id;
  nd.in1 = bias.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::relu(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tx[i] > 0.0 ? tx[i] : 0.0;
  Node nd;
  nd.op = Op::kRelu;
  nd.in0 = x.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::tanh(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(tx[i]);
  Node nd;
  nd.op = Op::kTanh;
  nd.in0 = x.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::scale(Var x, double factor) {
  if (!std::isfinite(factor)) throw ContractError("scale factor must be finite");
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tx[i] * factor;
  Node nd;
  nd.op = Op::kScale;
  nd.in0 = x.id;
  nd.factor = factor;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::mean_pool(Var x) {
  const Tensor& tx = node(x).value;
  require_matrix(tx, "mean_pool");
  const std::size_t cols = tx.cols();
  Var pooled = group_mean_pool(x, tx.rows());
  Tensor& out = nodes_[pooled.id].value;
  out = Tensor({cols}, std::vector<double>(out.data().begin(), out.data().end()));
  return pooled;
}

Var Tape::group_mean_pool(Var x, std::size_t group) {
  const Tensor& tx = node(x).value;
  require_matrix(tx, "group_mean_pool");
  if (group == 0) throw ContractError("mean pool over an empty group");
  if (tx.rows() % group != 0) {
    throw DimensionError("group size " + std::to_string(group) + " does not divide rows of " +
                         tx.shape_string());
  }
  const std::size_t groups = tx.rows() / group, cols = tx.cols();
  Tensor out({groups, cols});
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = 0; r < group; ++r) {
      const std::size_t row = g * group + r;
      for (std::size_t c = 0; c < cols; ++c) out[g * cols + c] += tx[row * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[g * cols + c] *= inv;
  }
  Node nd;
  nd.op = Op::kGroupMeanPool;
  nd.in0 = x.id;
  nd.group = group;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  const Tensor& tt = node(table).value;
  require_matrix(tt, "embedding");
  if (ids.empty()) throw ContractError("embedding lookup with no ids");
  const std::size_t vocab = tt.rows(), width = tt.cols();
  Tensor out({ids.size(), width});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(tt.data().begin() + static_cast<std::ptrdiff_t>(id * width), width,
                out.data().begin() + static_cast<std::ptrdiff_t>(t * width));
  }
  Node nd;
  nd.op = Op::kEmbedding;
  nd.in0 = table.id;
  nd.ids.assign(ids.begin(), ids.end());
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require_matrix(ta, "concat_cols");
  require_matrix(tb, "concat_cols");
  if (ta.rows() != tb.rows()) {
    throw DimensionError("concat_cols row mismatch: " + ta.shape_string() + " vs " + tb.shape_string());
  }
  const std::size_t rows = ta.rows(), ca = ta.cols(), cb = tb.cols();
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = ta[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = tb[r * cb + c];
  }
  Node nd;
  nd.op = Op::kConcatCols;
  nd.in0 = a.id;
  nd.in1 = b.id;
  nd.value = std::move(out);
  return push(std::move(nd));
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& tl = node(logits).value;
  if (tl.rank() > 2) throw DimensionError("logits must be [K] or [B x K], got " + tl.shape_string());
  const std::size_t rows = tl.rows(), classes = tl.cols();
  if (classes < 2) throw DimensionError("softmax needs at least 2 classes, got " + tl.shape_string());
  if (labels.size() != rows) {
    throw DimensionError(std::to_string(labels.size()) + " labels for logits " + tl.shape_string());
  }
  std::vector<double> probs(tl.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw IndexError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    const double* z = tl.data().data() + r * classes;
    double* p = probs.data() + r * classes;
    const double top = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - top);
      denom += p[c];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c] /= denom;
    total += (top + std::log(denom)) - z[label];
  }
  Node nd;
  nd.op = Op::kSoftmaxCrossEntropy;
  nd.in0 = logits.id;
  nd.ids.assign(labels.begin(), labels.end());
  nd.cache = std::move(probs);
  nd.value = Tensor::scalar(total / static_cast<double>(rows));
  return push(std::move(nd));
}

Var Tape::sum_squares(Var x) {
  const Tensor& tx = node(x).value;
  double s = 0.0;
  for (double v : tx.data()) s += v * v;
  Node nd;
  nd.op = Op::kSumSquares;
  nd.in0 = x.id;
  nd.value = Tensor::scalar(s);
  return push(std::move(nd));
}

std::span<const double> Tape::grad(Var v) const {
  if (v.id >= grads_.size()) throw ContractError("grad() requested before backward()");
  return grads_[v.id];
}

void Tape::backward(Var loss) {
  const Tensor& tl = node(loss).value;
  if (tl.size() != 1) throw ContractError("backward() needs a scalar loss, got " + tl.shape_string());
  grads_.assign(nodes_.size(), {});
  grads_[loss.id] = {1.0};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!grads_[i].empty()) backward_node(i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (grads_[i].empty()) grads_[i].assign(nodes_[i].value.size(), 0.0);
    if (nodes_[i].param != nullptr && mode_ == ParamGrads::kWrite) {
      auto g = nodes_[i].param->grad();
      std::copy(grads_[i].begin(), grads_[i].end(), g.begin());
    }
  }
}

void Tape::backward_node(std::size_t index) {
  const Node& nd = nodes_[index];
  const std::vector<double>& g = grads_[index];
  auto input_grad = [&](std::size_t input) -> std::vector<double>& {
    auto& buf = grads_[input];
    if (buf.empty()) buf.assign(nodes_[input].value.size(), 0.0);
    return buf;
  };

  switch (nd.op) {
    case Op::kConstant:
    case Op::kParameter:
      break;
    case Op::kMatmul: {
      const Tensor& a = nodes_[nd.in0].value;
      const Tensor& b = nodes_[nd.in1].value;
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      kernels::gemm_nt(g, b.data(), input_grad(nd.in0), m, n, k);
      kernels::gemm_tn(a.data(), g, input_grad(nd.in1), m, k, n);
      break;
    }
    case Op::kAdd: {
      auto& ga = input_grad(nd.in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      auto& gb = input_grad(nd.in1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      break;
    }
    case Op::kAddRowBias: {
      auto& gx = input_grad(nd.in0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      auto& gb = input_grad(nd.in1);
      const std::size_t cols = gb.size(), rows = g.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
      break;
    }
    case Op::kRelu: {
      const Tensor& x = nodes_[nd.in0].value;
      auto& gx = input_grad(nd.in0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      break;
    }
    case Op::kTanh: {
      auto& gx = input_grad(nd.in0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = nd.value[i];
        gx[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::kScale: {
      auto& gx = input_grad(nd.in0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * nd.factor;
      break;
    }
    case Op::kGroupMeanPool: {
      auto& gx = input_grad(nd.in0);
      const std::size_t cols = nodes_[nd.in0].value.cols();
      const std::size_t groups = g.size() / cols;
      const double inv = 1.0 / static_cast<double>(nd.group);
      for (std::size_t grp = 0; grp < groups; ++grp) {
        for (std::size_t r = 0; r < nd.group; ++r) {
          const std::size_t row = grp * nd.group + r;
          for (std::size_t c = 0; c < cols; ++c) gx[row * cols + c] += g[grp * cols + c] * inv;
        }
      }
      break;
    }
    case Op::kEmbedding: {
      auto& gt = input_grad(nd.in0);
      const std::size_t width = nodes_[nd.in0].value.cols();
      for (std::size_t t = 0; t < nd.ids.size(); ++t) {
        const std::size_t row = static_cast<std::size_t>(nd.ids[t]);
        for (std::size_t c = 0; c < width; ++c) gt[row * width + c] += g[t * width + c];
      }
      break;
    }
    case Op::kConcatCols: {
      const std::size_t ca = nodes_[nd.in0].value.cols();
      const std::size_t cb = nodes_[nd.in1].value.cols();
      const std::size_t rows = nd.value.rows();
      auto& ga = input_grad(nd.in0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
      }
      auto& gb = input_grad(nd.in1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
      }
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      auto& gl = input_grad(nd.in0);
      const std::size_t rows = nd.ids.size();
      const std::size_t classes = nd.cache.size() / rows;
      const double w = g[0] / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double target = static_cast<int>(c) == nd.ids[r] ? 1.0 : 0.0;
          gl[r * classes + c] += w * (nd.cache[r * classes + c] - target);
        }
      }
      break;
    }
    case Op::kSumSquares: {
      const Tensor& x = nodes_[nd.in0].value;
      auto& gx = input_grad(nd.in0);
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * x[i] * g[0];
      break;
    }
  }
}

}  // namespace aim::diff
