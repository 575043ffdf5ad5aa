#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metadse/arch_mask.hpp"
#include "metadse/autodiff.hpp"
#include "metadse/matrix.hpp"

namespace metadse {

enum class OutputKind { Ipc, Power, Both };

std::string to_string(OutputKind k);
OutputKind parse_output_kind(const std::string& s);

struct PredictorConfig {
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t mlp_hidden = 64;
  OutputKind outputs = OutputKind::Ipc;

  std::size_t output_count() const noexcept { return outputs == OutputKind::Both ? 2 : 1; }
  void validate() const;
  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

enum class SegmentKind { Weight, Bias, Gain };

struct Segment {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::size_t offset = 0;
  SegmentKind kind = SegmentKind::Weight;
  std::size_t size() const noexcept { return rows * cols; }
};

// Named slices of the flat parameter vector, in a fixed order.
class ParamLayout {
 public:
  ParamLayout(const PredictorConfig& config, std::size_t params);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const Segment& segment(const std::string& name) const;
  std::size_t total() const noexcept { return total_; }

  // 2PD + L(4D² + 2DF + 9D + F) + 2D + DF + F + FO + O
  static std::size_t count(const PredictorConfig& config, std::size_t params);

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

// Flat surrogate weights (θ, θ̂, θ*, ...). Value type.
struct ParamVector {
  std::vector<double> values;
  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

std::vector<Matrix> unflatten(const ParamLayout& layout, const ParamVector& params);
ParamVector flatten(const ParamLayout& layout, const std::vector<Matrix>& segments);

// Attention weights from one forward pass: one tokens×tokens row-stochastic
// matrix per (layer, sample, head).
struct AttentionRecord {
  std::size_t layers = 0, samples = 0, heads = 0, tokens = 0;
  std::vector<Matrix> weights;

  const Matrix& at(std::size_t layer, std::size_t sample, std::size_t head) const {
    return weights[(layer * samples + sample) * heads + head];
  }
  Matrix head_average(std::size_t layer, std::size_t sample) const;
};

// Features (n×P) with targets (n×outputs) already in model units.
struct Batch {
  Matrix features;
  Matrix targets;
  std::size_t size() const noexcept { return features.rows(); }
};

struct LossAndGrad {
  double loss = 0;
  std::vector<double> grad;  // same layout as ParamVector
  Matrix mask_grad;          // empty unless the mask was learnable
  AttentionRecord attention;
};

// Transformer regressor with one token per architectural parameter:
// token_i = x_i·value_embedding_i + param_embedding_i, pre-LN self-attention
// blocks, mean pooling, and a two-layer MLP head.
class Surrogate {
 public:
  Surrogate(PredictorConfig config, std::size_t params);

  const PredictorConfig& config() const noexcept { return config_; }
  std::size_t params() const noexcept { return params_; }
  const ParamLayout& layout() const noexcept { return layout_; }

  // Xavier-uniform weights, zero biases, unit layer-norm gains.
  ParamVector init_params(std::uint64_t seed) const;

  struct Prediction {
    Matrix outputs;  // n×outputs
    AttentionRecord attention;
  };
  Prediction forward(const ParamVector& theta, const Matrix& features, const ArchMask* mask = nullptr) const;

  // Mean squared error over samples and outputs.
  double loss(const ParamVector& theta, const Batch& batch, const ArchMask* mask = nullptr) const;
  // Loss plus gradient for θ, and for the mask when mask->learnable.
  LossAndGrad loss_and_grad(const ParamVector& theta, const Batch& batch, const ArchMask* mask = nullptr,
                            bool record_attention = false) const;

  // Builds the computation graph on `tape`; exposed for gradient tests.
  struct Graph {
    std::vector<Var> segments;
    std::optional<Var> mask;
    std::vector<Var> attention;  // one per layer
    Var prediction;
    std::optional<Var> loss;
  };
  Graph build(Tape& tape, const ParamVector& theta, const Matrix& features, const Matrix* targets,
              const ArchMask* mask, bool params_require_grad) const;

 private:
  void check_inputs(const ParamVector& theta, const Matrix& features, const ArchMask* mask) const;
  AttentionRecord collect_attention(const Tape& tape, const Graph& g, std::size_t samples) const;

  PredictorConfig config_;
  std::size_t params_;
  ParamLayout layout_;
};

}  // namespace metadse
