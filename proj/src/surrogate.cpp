#include "metadse/surrogate.hpp"

#include <cmath>

#include "metadse/errors.hpp"
#include "metadse/rng.hpp"

namespace metadse {

std::string to_string(OutputKind k) {
  switch (k) {
    case OutputKind::Ipc: return "ipc";
    case OutputKind::Power: return "power";
    case OutputKind::Both: return "both";
  }
  return "?";
}

OutputKind parse_output_kind(const std::string& s) {
  if (s == "ipc") return OutputKind::Ipc;
  if (s == "power") return OutputKind::Power;
  if (s == "both") return OutputKind::Both;
  throw ConfigError("unknown output kind '" + s + "' (expected ipc, power or both)");
}

void PredictorConfig::validate() const {
  if (embed_dim == 0 || heads == 0 || mlp_hidden == 0) throw ConfigError("predictor sizes must be positive");
  if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
  if (layers < 1) throw ConfigError("predictor needs at least one layer");
}

ArchMask ArchMask::ones(std::size_t p) { return ArchMask{Matrix(p, p, 1.0), false}; }

void ArchMask::validate() const {
  if (m.rows() != m.cols() || m.rows() == 0) throw ShapeError("mask must be square, got " + m.shape_str());
  for (double x : m.data())
    if (!(x >= 0.0 && x <= 1.0)) throw ContractError("mask entries must lie in [0, 1]");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m.cols(); ++j) any = any || m(i, j) != 0.0;
    if (!any) throw DegenerateMask("mask row " + std::to_string(i) + " is all zero");
  }
}

std::size_t ArchMask::clamp() {
  std::size_t resets = 0;
  for (double& x : m.data()) x = std::isnan(x) ? 0.0 : std::min(1.0, std::max(0.0, x));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m.cols(); ++j) any = any || m(i, j) != 0.0;
    if (!any) {
      for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = 1.0 / static_cast<double>(m.cols());
      ++resets;
    }
  }
  return resets;
}

ParamLayout::ParamLayout(const PredictorConfig& config, std::size_t params) {
  config.validate();
  if (params == 0) throw ContractError("surrogate needs at least one architectural parameter");
  const std::size_t d = config.embed_dim, f = config.mlp_hidden, o = config.output_count();
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, SegmentKind kind) {
    segments_.push_back(Segment{std::move(name), rows, cols, total_, kind});
    total_ += rows * cols;
  };
  add("value_embedding", params, d, SegmentKind::Weight);
  add("param_embedding", params, d, SegmentKind::Weight);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.gain", 1, d, SegmentKind::Gain);
    add(p + "ln1.bias", 1, d, SegmentKind::Bias);
    for (const char* w : {"q", "k", "v", "o"}) {
      add(p + "attn.w" + w, d, d, SegmentKind::Weight);
      add(p + "attn.b" + w, 1, d, SegmentKind::Bias);
    }
    add(p + "ln2.gain", 1, d, SegmentKind::Gain);
    add(p + "ln2.bias", 1, d, SegmentKind::Bias);
    add(p + "ff.w1", d, f, SegmentKind::Weight);
    add(p + "ff.b1", 1, f, SegmentKind::Bias);
    add(p + "ff.w2", f, d, SegmentKind::Weight);
    add(p + "ff.b2", 1, d, SegmentKind::Bias);
  }
  add("final_ln.gain", 1, d, SegmentKind::Gain);
  add("final_ln.bias", 1, d, SegmentKind::Bias);
  add("head.w1", d, f, SegmentKind::Weight);
  add("head.b1", 1, f, SegmentKind::Bias);
  add("head.w2", f, o, SegmentKind::Weight);
  add("head.b2", 1, o, SegmentKind::Bias);
}

const Segment& ParamLayout::segment(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw ContractError("no parameter segment named '" + name + "'");
}

std::size_t ParamLayout::count(const PredictorConfig& c, std::size_t p) {
  const std::size_t d = c.embed_dim, f = c.mlp_hidden, o = c.output_count();
  return 2 * p * d + c.layers * (4 * d * d + 2 * d * f + 9 * d + f) + 2 * d + d * f + f + f * o + o;
}

std::vector<Matrix> unflatten(const ParamLayout& layout, const ParamVector& params) {
  if (params.size() != layout.total())
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, layout needs " +
                     std::to_string(layout.total()));
  std::vector<Matrix> out;
  out.reserve(layout.segments().size());
  for (const auto& s : layout.segments()) {
    auto first = params.values.begin() + static_cast<std::ptrdiff_t>(s.offset);
    out.emplace_back(s.rows, s.cols, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(s.size())));
  }
  return out;
}

ParamVector flatten(const ParamLayout& layout, const std::vector<Matrix>& segments) {
  if (segments.size() != layout.segments().size()) throw ShapeError("segment count does not match layout");
  ParamVector p;
  p.values.reserve(layout.total());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = layout.segments()[i];
    if (segments[i].rows() != s.rows || segments[i].cols() != s.cols)
      throw ShapeError("segment '" + s.name + "' has shape " + segments[i].shape_str());
    p.values.insert(p.values.end(), segments[i].data().begin(), segments[i].data().end());
  }
  return p;
}

Matrix AttentionRecord::head_average(std::size_t layer, std::size_t sample) const {
  Matrix avg(tokens, tokens);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix& w = at(layer, sample, h);
    for (std::size_t i = 0; i < avg.size(); ++i) avg.data()[i] += w.data()[i];
  }
  const double inv = 1.0 / static_cast<double>(heads);
  for (double& x : avg.data()) x *= inv;
  return avg;
}

Surrogate::Surrogate(PredictorConfig config, std::size_t params)
    : config_(config), params_(params), layout_(config, params) {}

ParamVector Surrogate::init_params(std::uint64_t seed) const {
  ParamVector p;
  p.values.assign(layout_.total(), 0.0);
  Rng rng(derive_seed(seed, {hash_tag("init")}));
  for (const auto& s : layout_.segments()) {
    double* first = p.values.data() + s.offset;
    switch (s.kind) {
      case SegmentKind::Bias:
        break;
      case SegmentKind::Gain:
        for (std::size_t i = 0; i < s.size(); ++i) first[i] = 1.0;
        break;
      case SegmentKind::Weight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
        for (std::size_t i = 0; i < s.size(); ++i) first[i] = rng.uniform(-limit, limit);
        break;
      }
    }
  }
  return p;
}

void Surrogate::check_inputs(const ParamVector& theta, const Matrix& features, const ArchMask* mask) const {
  if (theta.size() != layout_.total())
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(layout_.total()));
  if (features.cols() != params_)
    throw ShapeError("features have " + std::to_string(features.cols()) + " columns, expected " +
                     std::to_string(params_));
  if (features.rows() == 0) throw ContractError("empty batch");
  if (mask) {
    if (mask->m.rows() != params_ || mask->m.cols() != params_)
      throw ShapeError("mask is " + mask->m.shape_str() + ", expected " + std::to_string(params_) + "x" +
                       std::to_string(params_));
    mask->validate();
  }
}

Surrogate::Graph Surrogate::build(Tape& tape, const ParamVector& theta, const Matrix& features, const Matrix* targets,
                                  const ArchMask* mask, bool params_require_grad) const {
  check_inputs(theta, features, mask);
  Graph g;
  auto segs = unflatten(layout_, theta);
  g.segments.reserve(segs.size());
  for (auto& m : segs) g.segments.push_back(tape.leaf(std::move(m), params_require_grad));
  if (mask) g.mask = tape.leaf(mask->m, mask->learnable);

  std::size_t next = 0;
  auto seg = [&]() { return g.segments[next++]; };

  const Var x = tape.constant(features);
  const Var value_emb = seg();
  const Var param_emb = seg();
  Var h = tape.token_embed(x, value_emb, param_emb);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const Var ln1_gain = seg(), ln1_bias = seg();
    const Var wq = seg(), bq = seg(), wk = seg(), bk = seg(), wv = seg(), bv = seg(), wo = seg(), bo = seg();
    const Var ln2_gain = seg(), ln2_bias = seg();
    const Var w1 = seg(), b1 = seg(), w2 = seg(), b2 = seg();

    const Var a = tape.add_row(tape.mul_row(tape.layernorm_rows(h), ln1_gain), ln1_bias);
    const Var q = tape.add_row(tape.matmul(a, wq), bq);
    const Var k = tape.add_row(tape.matmul(a, wk), bk);
    const Var v = tape.add_row(tape.matmul(a, wv), bv);
    const Var att = tape.attention(q, k, v, g.mask, config_.heads, params_);
    g.attention.push_back(att);
    h = tape.add(h, tape.add_row(tape.matmul(att, wo), bo));

    const Var b = tape.add_row(tape.mul_row(tape.layernorm_rows(h), ln2_gain), ln2_bias);
    const Var ff = tape.add_row(tape.matmul(tape.relu(tape.add_row(tape.matmul(b, w1), b1)), w2), b2);
    h = tape.add(h, ff);
  }
  const Var fin_gain = seg(), fin_bias = seg();
  const Var z = tape.add_row(tape.mul_row(tape.layernorm_rows(h), fin_gain), fin_bias);
  const Var pooled = tape.mean_blocks(z, params_);
  const Var hw1 = seg(), hb1 = seg(), hw2 = seg(), hb2 = seg();
  const Var hidden = tape.relu(tape.add_row(tape.matmul(pooled, hw1), hb1));
  g.prediction = tape.add_row(tape.matmul(hidden, hw2), hb2);

  if (targets) {
    if (targets->rows() != features.rows() || targets->cols() != config_.output_count())
      throw ShapeError("targets are " + targets->shape_str() + ", expected " + std::to_string(features.rows()) + "x" +
                       std::to_string(config_.output_count()));
    g.loss = tape.mse(g.prediction, tape.constant(*targets));
  }
  return g;
}

AttentionRecord Surrogate::collect_attention(const Tape& tape, const Graph& g, std::size_t samples) const {
  AttentionRecord rec;
  rec.layers = g.attention.size();
  rec.samples = samples;
  rec.heads = config_.heads;
  rec.tokens = params_;
  rec.weights.reserve(rec.layers * samples * rec.heads);
  for (Var a : g.attention)
    for (const auto& w : tape.attention_weights(a)) rec.weights.push_back(w);
  return rec;
}

Surrogate::Prediction Surrogate::forward(const ParamVector& theta, const Matrix& features, const ArchMask* mask) const {
  Tape tape;
  const Graph g = build(tape, theta, features, nullptr, mask, false);
  return Prediction{tape.value(g.prediction), collect_attention(tape, g, features.rows())};
}

double Surrogate::loss(const ParamVector& theta, const Batch& batch, const ArchMask* mask) const {
  Tape tape;
  const Graph g = build(tape, theta, batch.features, &batch.targets, mask, false);
  return tape.value(*g.loss)(0, 0);
}

LossAndGrad Surrogate::loss_and_grad(const ParamVector& theta, const Batch& batch, const ArchMask* mask,
                                     bool record_attention) const {
  Tape tape;
  const Graph g = build(tape, theta, batch.features, &batch.targets, mask, true);
  tape.backward(*g.loss);
  LossAndGrad out;
  out.loss = tape.value(*g.loss)(0, 0);
  out.grad.resize(layout_.total());
  for (std::size_t i = 0; i < g.segments.size(); ++i) {
    const auto& gr = tape.grad(g.segments[i]).data();
    std::copy(gr.begin(), gr.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(layout_.segments()[i].offset));
  }
  if (g.mask && mask->learnable) out.mask_grad = tape.grad(*g.mask);
  if (record_attention) out.attention = collect_attention(tape, g, batch.size());
  return out;
}

}  // namespace metadse
