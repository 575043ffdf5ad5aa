#include "metadse/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "metadse/errors.hpp"

namespace metadse {

namespace {

constexpr double kLayerNormEps = 1e-10;

// c += a·b   (a: n×k, b: k×m, c: n×m)
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row_ptr(i);
    const double* ai = a.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.row_ptr(p);
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a·bᵀ   (a: n×m, b: k×m, c: n×k)
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), m = a.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b.row_ptr(p);
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// c += aᵀ·b   (a: n×k, b: n×m, c: k×m)
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row_ptr(i);
    const double* bi = b.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c.row_ptr(p);
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str());
}

void require_row(const Matrix& a, const Matrix& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) + " row, got " + row.shape_str());
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::MulRow: return "mul_row";
    case Op::Scale: return "scale";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::RowNormalize: return "row_normalize";
    case Op::Relu: return "relu";
    case Op::LayerNormRows: return "layernorm_rows";
    case Op::Hadamard: return "hadamard";
    case Op::Mse: return "mse";
    case Op::MeanBlocks: return "mean_blocks";
    case Op::TokenEmbed: return "token_embed";
    case Op::Attention: return "attention";
  }
  return "?";
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  if (!n.value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op_name(n.op));
  if (n.op != Op::Leaf) {
    for (std::size_t id : n.in)
      if (id != npos && nodes_[id].requires_grad) n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const { return node(v).grad; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const std::vector<Matrix>& Tape::attention_weights(Var attn) const {
  const Node& n = node(attn);
  if (n.op != Op::Attention) throw ContractError("node is not an attention op");
  return n.weights;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  if (x.cols() != y.rows()) throw ShapeError("matmul: " + x.shape_str() + " times " + y.shape_str());
  Node n;
  n.op = Op::MatMul;
  n.in[0] = a.id;
  n.in[1] = b.id;
  n.value = Matrix(x.rows(), y.cols());
  gemm_nn(x, y, n.value);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  require_same(x, y, "add");
  Node n;
  n.op = Op::Add;
  n.in[0] = a.id;
  n.in[1] = b.id;
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value.data()[i] += y.data()[i];
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& x = value(a);
  const Matrix& r = value(row);
  require_row(x, r, "add_row");
  Node n;
  n.op = Op::AddRow;
  n.in[0] = a.id;
  n.in[1] = row.id;
  n.value = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* out = n.value.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += r.data()[j];
  }
  return push(std::move(n));
}

Var Tape::mul_row(Var a, Var row) {
  const Matrix& x = value(a);
  const Matrix& r = value(row);
  require_row(x, r, "mul_row");
  Node n;
  n.op = Op::MulRow;
  n.in[0] = a.id;
  n.in[1] = row.id;
  n.value = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* out = n.value.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] *= r.data()[j];
  }
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.in[0] = a.id;
  n.scalar = s;
  n.value = value(a);
  for (double& x : n.value.data()) x *= s;
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::SoftmaxRows;
  n.in[0] = a.id;
  n.value = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row_ptr(i);
    double* yi = n.value.row_ptr(i);
    const double mx = *std::max_element(xi, xi + x.cols());
    double sum = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) sum += (yi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < x.cols(); ++j) yi[j] /= sum;
  }
  return push(std::move(n));
}

Var Tape::row_normalize(Var a) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::RowNormalize;
  n.in[0] = a.id;
  n.value = x;
  n.cache.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* yi = n.value.row_ptr(i);
    double sum = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) sum += yi[j];
    if (!(sum > 0)) throw NumericError("row_normalize: row " + std::to_string(i) + " has non-positive sum");
    for (std::size_t j = 0; j < x.cols(); ++j) yi[j] /= sum;
    n.cache[i] = sum;
  }
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.in[0] = a.id;
  n.value = value(a);
  for (double& x : n.value.data()) x = x > 0 ? x : 0.0;
  return push(std::move(n));
}

Var Tape::layernorm_rows(Var a) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::LayerNormRows;
  n.in[0] = a.id;
  n.value = Matrix(x.rows(), x.cols());
  n.cache.resize(x.rows());
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row_ptr(i);
    double mean = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) mean += xi[j];
    mean *= inv_n;
    double var = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var *= inv_n;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    double* yi = n.value.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) yi[j] = (xi[j] - mean) * inv_std;
    n.cache[i] = inv_std;
  }
  return push(std::move(n));
}

Var Tape::hadamard(Var a, Var mask) {
  const Matrix& x = value(a);
  const Matrix& m = value(mask);
  require_same(x, m, "hadamard");
  Node n;
  n.op = Op::Hadamard;
  n.in[0] = a.id;
  n.in[1] = mask.id;
  n.value = x;
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] *= m.data()[i];
  return push(std::move(n));
}

Var Tape::mse(Var pred, Var target) {
  const Matrix& p = value(pred);
  const Matrix& t = value(target);
  require_same(p, t, "mse");
  if (p.size() == 0) throw ContractError("mse of empty matrices");
  Node n;
  n.op = Op::Mse;
  n.in[0] = pred.id;
  n.in[1] = target.id;
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p.data()[i] - t.data()[i];
    s += r * r;
  }
  n.value = Matrix(1, 1, s / static_cast<double>(p.size()));
  return push(std::move(n));
}

Var Tape::mean_blocks(Var a, std::size_t block) {
  const Matrix& x = value(a);
  if (block == 0 || x.rows() % block != 0)
    throw ShapeError("mean_blocks: " + std::to_string(x.rows()) + " rows not divisible by " + std::to_string(block));
  Node n;
  n.op = Op::MeanBlocks;
  n.in[0] = a.id;
  n.ia = block;
  const std::size_t groups = x.rows() / block;
  n.value = Matrix(groups, x.cols());
  const double inv = 1.0 / static_cast<double>(block);
  for (std::size_t g = 0; g < groups; ++g) {
    double* out = n.value.row_ptr(g);
    for (std::size_t r = 0; r < block; ++r) {
      const double* xi = x.row_ptr(g * block + r);
      for (std::size_t j = 0; j < x.cols(); ++j) out[j] += xi[j];
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] *= inv;
  }
  return push(std::move(n));
}

Var Tape::token_embed(Var x, Var weight, Var bias) {
  const Matrix& f = value(x);
  const Matrix& w = value(weight);
  const Matrix& b = value(bias);
  if (w.rows() != f.cols() || !w.same_shape(b))
    throw ShapeError("token_embed: features " + f.shape_str() + ", weight " + w.shape_str() + ", bias " + b.shape_str());
  Node n;
  n.op = Op::TokenEmbed;
  n.in[0] = x.id;
  n.in[1] = weight.id;
  n.in[2] = bias.id;
  const std::size_t t = f.cols(), d = w.cols();
  n.value = Matrix(f.rows() * t, d);
  for (std::size_t s = 0; s < f.rows(); ++s)
    for (std::size_t i = 0; i < t; ++i) {
      const double xv = f(s, i);
      const double* wi = w.row_ptr(i);
      const double* bi = b.row_ptr(i);
      double* out = n.value.row_ptr(s * t + i);
      for (std::size_t j = 0; j < d; ++j) out[j] = xv * wi[j] + bi[j];
    }
  return push(std::move(n));
}

Var Tape::attention(Var q, Var k, Var v, std::optional<Var> mask, std::size_t heads, std::size_t tokens) {
  const Matrix& Q = value(q);
  const Matrix& K = value(k);
  const Matrix& V = value(v);
  require_same(Q, K, "attention");
  require_same(Q, V, "attention");
  if (heads == 0 || Q.cols() % heads != 0) throw ShapeError("attention: width not divisible by head count");
  if (tokens == 0 || Q.rows() % tokens != 0) throw ShapeError("attention: rows not divisible by token count");
  const Matrix* M = nullptr;
  if (mask) {
    M = &value(*mask);
    if (M->rows() != tokens || M->cols() != tokens)
      throw ShapeError("attention: mask must be " + std::to_string(tokens) + "x" + std::to_string(tokens));
    for (std::size_t i = 0; i < tokens; ++i) {
      const double* mi = M->row_ptr(i);
      if (std::all_of(mi, mi + tokens, [](double x) { return x == 0.0; }))
        throw DegenerateMask("mask row " + std::to_string(i) + " is all zero");
    }
  }
  const std::size_t seqs = Q.rows() / tokens;
  const std::size_t dh = Q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Node n;
  n.op = Op::Attention;
  n.in[0] = q.id;
  n.in[1] = k.id;
  n.in[2] = v.id;
  if (mask) n.in[3] = mask->id;
  n.ia = heads;
  n.ib = tokens;
  n.value = Matrix(Q.rows(), Q.cols());
  n.weights.reserve(seqs * heads);
  // Softmax outputs, before masking; needed for the backward pass.
  n.cache.resize(seqs * heads * tokens * tokens);
  std::vector<double> logits(tokens);
  for (std::size_t s = 0; s < seqs; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      Matrix W(tokens, tokens);
      double* soft = n.cache.data() + (s * heads + h) * tokens * tokens;
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < tokens; ++i) {
        const double* qi = Q.row_ptr(s * tokens + i) + c0;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < tokens; ++j) {
          const double* kj = K.row_ptr(s * tokens + j) + c0;
          double dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          logits[j] = dot * scale;
          mx = std::max(mx, logits[j]);
        }
        double sum = 0;
        double* si = soft + i * tokens;
        for (std::size_t j = 0; j < tokens; ++j) sum += (si[j] = std::exp(logits[j] - mx));
        for (std::size_t j = 0; j < tokens; ++j) si[j] /= sum;
        double* wi = W.row_ptr(i);
        double rs = 0;
        if (M) {
          const double* mi = M->row_ptr(i);
          for (std::size_t j = 0; j < tokens; ++j) rs += (wi[j] = si[j] * mi[j]);
        } else {
          for (std::size_t j = 0; j < tokens; ++j) rs += (wi[j] = si[j]);
        }
        if (!(rs > 0)) throw NumericError("attention: masked row has zero mass");
        for (std::size_t j = 0; j < tokens; ++j) wi[j] /= rs;
        double* out = n.value.row_ptr(s * tokens + i) + c0;
        for (std::size_t j = 0; j < tokens; ++j) {
          const double w = wi[j];
          const double* vj = V.row_ptr(s * tokens + j) + c0;
          for (std::size_t c = 0; c < dh; ++c) out[c] += w * vj[c];
        }
      }
      n.weights.push_back(std::move(W));
    }
  }
  return push(std::move(n));
}

Matrix& Tape::grad_of(std::size_t id) { return nodes_[id].grad; }

void Tape::backward(Var loss) {
  const Node& l = node(loss);
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw ContractError("backward needs a scalar loss, got " + l.value.shape_str());
  for (auto& n : nodes_) {
    if (n.requires_grad) {
      if (n.grad.same_shape(n.value))
        n.grad.fill(0.0);
      else
        n.grad = Matrix(n.value.rows(), n.value.cols());
    } else {
      n.grad = Matrix();
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.op != Op::Leaf) backprop(n);
  }
}

void Tape::backprop(Node& n) {
  const Matrix& g = n.grad;
  auto wants = [&](int slot) { return n.in[slot] != npos && nodes_[n.in[slot]].requires_grad; };
  auto in_value = [&](int slot) -> const Matrix& { return nodes_[n.in[slot]].value; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul:
      if (wants(0)) gemm_nt(g, in_value(1), grad_of(n.in[0]));
      if (wants(1)) gemm_tn(in_value(0), g, grad_of(n.in[1]));
      break;
    case Op::Add:
      for (int s = 0; s < 2; ++s)
        if (wants(s)) {
          auto& d = grad_of(n.in[s]).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i];
        }
      break;
    case Op::AddRow:
      if (wants(0)) {
        auto& d = grad_of(n.in[0]).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i];
      }
      if (wants(1)) {
        double* dr = grad_of(n.in[1]).row_ptr(0);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* gi = g.row_ptr(i);
          for (std::size_t j = 0; j < g.cols(); ++j) dr[j] += gi[j];
        }
      }
      break;
    case Op::MulRow: {
      const Matrix& x = in_value(0);
      const Matrix& r = in_value(1);
      if (wants(0)) {
        Matrix& dx = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* gi = g.row_ptr(i);
          double* di = dx.row_ptr(i);
          for (std::size_t j = 0; j < g.cols(); ++j) di[j] += gi[j] * r.data()[j];
        }
      }
      if (wants(1)) {
        double* dr = grad_of(n.in[1]).row_ptr(0);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double* gi = g.row_ptr(i);
          const double* xi = x.row_ptr(i);
          for (std::size_t j = 0; j < g.cols(); ++j) dr[j] += gi[j] * xi[j];
        }
      }
      break;
    }
    case Op::Scale: {
      auto& d = grad_of(n.in[0]).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i] * n.scalar;
      break;
    }
    case Op::SoftmaxRows: {
      Matrix& dx = grad_of(n.in[0]);
      const Matrix& y = n.value;
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double* yi = y.row_ptr(i);
        const double* gi = g.row_ptr(i);
        double dot = 0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += gi[j] * yi[j];
        double* di = dx.row_ptr(i);
        for (std::size_t j = 0; j < y.cols(); ++j) di[j] += yi[j] * (gi[j] - dot);
      }
      break;
    }
    case Op::RowNormalize: {
      Matrix& dx = grad_of(n.in[0]);
      const Matrix& y = n.value;
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double* yi = y.row_ptr(i);
        const double* gi = g.row_ptr(i);
        double dot = 0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += gi[j] * yi[j];
        double* di = dx.row_ptr(i);
        for (std::size_t j = 0; j < y.cols(); ++j) di[j] += (gi[j] - dot) / n.cache[i];
      }
      break;
    }
    case Op::Relu: {
      const Matrix& x = in_value(0);
      auto& d = grad_of(n.in[0]).data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (x.data()[i] > 0) d[i] += g.data()[i];
      break;
    }
    case Op::LayerNormRows: {
      Matrix& dx = grad_of(n.in[0]);
      const Matrix& y = n.value;
      const double inv_n = 1.0 / static_cast<double>(y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double* yi = y.row_ptr(i);
        const double* gi = g.row_ptr(i);
        double mg = 0, mgy = 0;
        for (std::size_t j = 0; j < y.cols(); ++j) {
          mg += gi[j];
          mgy += gi[j] * yi[j];
        }
        mg *= inv_n;
        mgy *= inv_n;
        double* di = dx.row_ptr(i);
        for (std::size_t j = 0; j < y.cols(); ++j) di[j] += n.cache[i] * (gi[j] - mg - yi[j] * mgy);
      }
      break;
    }
    case Op::Hadamard: {
      const Matrix& x = in_value(0);
      const Matrix& m = in_value(1);
      if (wants(0)) {
        auto& d = grad_of(n.in[0]).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i] * m.data()[i];
      }
      if (wants(1)) {
        auto& d = grad_of(n.in[1]).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g.data()[i] * x.data()[i];
      }
      break;
    }
    case Op::Mse: {
      const Matrix& p = in_value(0);
      const Matrix& t = in_value(1);
      const double c = 2.0 * g(0, 0) / static_cast<double>(p.size());
      if (wants(0)) {
        auto& d = grad_of(n.in[0]).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * (p.data()[i] - t.data()[i]);
      }
      if (wants(1)) {
        auto& d = grad_of(n.in[1]).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= c * (p.data()[i] - t.data()[i]);
      }
      break;
    }
    case Op::MeanBlocks: {
      Matrix& dx = grad_of(n.in[0]);
      const double inv = 1.0 / static_cast<double>(n.ia);
      for (std::size_t r = 0; r < dx.rows(); ++r) {
        const double* gi = g.row_ptr(r / n.ia);
        double* di = dx.row_ptr(r);
        for (std::size_t j = 0; j < dx.cols(); ++j) di[j] += gi[j] * inv;
      }
      break;
    }
    case Op::TokenEmbed: {
      const Matrix& f = in_value(0);
      const Matrix& w = in_value(1);
      const std::size_t t = f.cols(), d = w.cols();
      for (std::size_t s = 0; s < f.rows(); ++s)
        for (std::size_t i = 0; i < t; ++i) {
          const double* gi = g.row_ptr(s * t + i);
          if (wants(0)) {
            const double* wi = w.row_ptr(i);
            double dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += gi[j] * wi[j];
            grad_of(n.in[0])(s, i) += dot;
          }
          if (wants(1)) {
            double* dw = grad_of(n.in[1]).row_ptr(i);
            const double xv = f(s, i);
            for (std::size_t j = 0; j < d; ++j) dw[j] += xv * gi[j];
          }
          if (wants(2)) {
            double* db = grad_of(n.in[2]).row_ptr(i);
            for (std::size_t j = 0; j < d; ++j) db[j] += gi[j];
          }
        }
      break;
    }
    case Op::Attention: {
      const Matrix& Q = in_value(0);
      const Matrix& K = in_value(1);
      const Matrix& V = in_value(2);
      const Matrix* M = n.in[3] != npos ? &nodes_[n.in[3]].value : nullptr;
      const std::size_t heads = n.ia, tokens = n.ib;
      const std::size_t seqs = Q.rows() / tokens;
      const std::size_t dh = Q.cols() / heads;
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      Matrix* dQ = wants(0) ? &grad_of(n.in[0]) : nullptr;
      Matrix* dK = wants(1) ? &grad_of(n.in[1]) : nullptr;
      Matrix* dV = wants(2) ? &grad_of(n.in[2]) : nullptr;
      Matrix* dM = wants(3) ? &grad_of(n.in[3]) : nullptr;
      std::vector<double> dW(tokens), dU(tokens), dL(tokens);
      for (std::size_t s = 0; s < seqs; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const Matrix& W = n.weights[s * heads + h];
          const double* soft = n.cache.data() + (s * heads + h) * tokens * tokens;
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < tokens; ++i) {
            const double* gi = g.row_ptr(s * tokens + i) + c0;
            const double* wi = W.row_ptr(i);
            const double* si = soft + i * tokens;
            // dW = dOut · Vᵀ and dV += Wᵀ · dOut
            for (std::size_t j = 0; j < tokens; ++j) {
              const double* vj = V.row_ptr(s * tokens + j) + c0;
              double dot = 0;
              for (std::size_t c = 0; c < dh; ++c) dot += gi[c] * vj[c];
              dW[j] = dot;
              if (dV) {
                double* dvj = dV->row_ptr(s * tokens + j) + c0;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += wi[j] * gi[c];
              }
            }
            // Through W = U / rowsum(U), U = S ⊙ M.
            double rs = 0;
            if (M) {
              const double* mi = M->row_ptr(i);
              for (std::size_t j = 0; j < tokens; ++j) rs += si[j] * mi[j];
            } else {
              for (std::size_t j = 0; j < tokens; ++j) rs += si[j];
            }
            double wdot = 0;
            for (std::size_t j = 0; j < tokens; ++j) wdot += dW[j] * wi[j];
            for (std::size_t j = 0; j < tokens; ++j) dU[j] = (dW[j] - wdot) / rs;
            if (M) {
              const double* mi = M->row_ptr(i);
              if (dM) {
                double* dmi = dM->row_ptr(i);
                for (std::size_t j = 0; j < tokens; ++j) dmi[j] += dU[j] * si[j];
              }
              for (std::size_t j = 0; j < tokens; ++j) dU[j] *= mi[j];
            }
            // Softmax backward: dL = S ⊙ (dS − <dS, S>).
            double sdot = 0;
            for (std::size_t j = 0; j < tokens; ++j) sdot += dU[j] * si[j];
            for (std::size_t j = 0; j < tokens; ++j) dL[j] = si[j] * (dU[j] - sdot) * scale;
            const double* qi = Q.row_ptr(s * tokens + i) + c0;
            for (std::size_t j = 0; j < tokens; ++j) {
              if (dQ) {
                const double* kj = K.row_ptr(s * tokens + j) + c0;
                double* dqi = dQ->row_ptr(s * tokens + i) + c0;
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += dL[j] * kj[c];
              }
              if (dK) {
                double* dkj = dK->row_ptr(s * tokens + j) + c0;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += dL[j] * qi[c];
              }
            }
          }
        }
      }
      break;
    }
  }
}

}  // namespace metadse
