#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "metadse/matrix.hpp"

namespace metadse {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

enum class Op {
  Leaf,
  MatMul,
  Add,
  AddRow,
  MulRow,
  Scale,
  SoftmaxRows,
  RowNormalize,
  Relu,
  LayerNormRows,
  Hadamard,
  Mse,
  MeanBlocks,
  TokenEmbed,
  Attention,
};

const char* op_name(Op op) noexcept;

// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
// evaluation order, so the node list is already topologically sorted and
// backward() is a single reverse sweep. Every op checks its output for
// NaN/Inf and throws NumericError.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a + broadcast of the 1×cols row vector to every row.
  Var add_row(Var a, Var row);
  // a ⊙ broadcast of the 1×cols row vector.
  Var mul_row(Var a, Var row);
  Var scale(Var a, double s);
  Var softmax_rows(Var a);
  // Divides each row by its sum; rows must have a positive sum.
  Var row_normalize(Var a);
  Var relu(Var a);
  // Per-row standardization (mean 0, variance 1), no affine part.
  Var layernorm_rows(Var a);
  Var hadamard(Var a, Var mask);
  // Scalar mean of squared residuals.
  Var mse(Var pred, Var target);
  // Averages consecutive blocks of `block` rows: (n·block)×c -> n×c.
  Var mean_blocks(Var a, std::size_t block);
  // x is n×t (one row per sample); weight and bias are t×d. Row (s·t + i) of
  // the (n·t)×d result is x(s,i)·weight(i) + bias(i).
  Var token_embed(Var x, Var weight, Var bias);
  // Multi-head scaled dot-product attention over n independent sequences of
  // `tokens` rows each. q, k, v are (n·tokens)×d with d divisible by heads.
  // Per sequence and head the weights are rownorm(softmax(q kᵀ/√dh) ⊙ mask);
  // without a mask the row renormalization still runs, so an all-ones mask
  // reproduces the unmasked path bit for bit.
  Var attention(Var q, Var k, Var v, std::optional<Var> mask, std::size_t heads, std::size_t tokens);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() target with respect to v. Zero-shaped
  // for nodes that do not require a gradient.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Attention weights recorded by an Attention node: one tokens×tokens
  // matrix per (sequence, head), sequence-major.
  const std::vector<Matrix>& attention_weights(Var attn) const;

  // Reverse sweep from a 1×1 node. Accumulators are reset first, so calling it
  // again on the same tape gives identical gradients.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::size_t in[4] = {npos, npos, npos, npos};
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    double scalar = 0;
    std::size_t ia = 0, ib = 0;
    std::vector<double> cache;
    std::vector<Matrix> weights;
  };
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  void backprop(Node& n);
  Matrix& grad_of(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace metadse
