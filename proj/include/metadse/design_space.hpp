#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace metadse {

using FeatureVector = std::vector<double>;

enum class ParamKind { Range, Enumerated, Categorical };

// One tunable microarchitectural parameter and its candidate values.
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::Enumerated;
  std::vector<double> candidates;  // numeric values; label positions for categorical
  std::vector<std::string> labels;  // only for categorical

  static ParamSpec range(std::string name, double start, double end, double stride);
  static ParamSpec enumerated(std::string name, std::vector<double> values);
  static ParamSpec categorical(std::string name, std::vector<std::string> labels);

  std::size_t size() const noexcept { return candidates.size(); }
  double min() const { return candidates.front(); }
  double max() const { return candidates.back(); }

  // Position of `value` among the candidates, or -1 when it is not one of them.
  long index_of(double value) const;
  long index_of_label(const std::string& label) const;
  // Candidate rendered the way the dataset files write it.
  std::string format_candidate(std::size_t index) const;

  // Range-kind bookkeeping, kept so the space can be written back out.
  double range_start = 0, range_end = 0, range_stride = 0;
};

struct DesignPoint {
  std::vector<std::uint32_t> indices;
  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
  friend auto operator<=>(const DesignPoint&, const DesignPoint&) = default;
};

class DesignSpace {
 public:
  DesignSpace() = default;
  explicit DesignSpace(std::vector<ParamSpec> params);

  const std::vector<ParamSpec>& params() const noexcept { return params_; }
  std::size_t dims() const noexcept { return params_.size(); }
  const ParamSpec& param(std::size_t i) const { return params_.at(i); }
  // Index of the parameter with this name; throws ContractError if absent.
  std::size_t find(const std::string& name) const;

  // Product of candidate counts.
  std::uint64_t cardinality() const;

  bool valid(const DesignPoint& p) const noexcept;
  void validate(const DesignPoint& p) const;  // throws InvalidPoint

  // Candidate value of parameter i at point p.
  double value(const DesignPoint& p, std::size_t i) const;

  FeatureVector encode(const DesignPoint& p) const;
  DesignPoint decode(const FeatureVector& features) const;

  std::vector<DesignPoint> sample_uniform(std::size_t n, std::uint64_t seed) const;

  // Human-readable key-value form, one parameter per line.
  std::string to_text() const;
  static DesignSpace from_text(const std::string& text);
  static DesignSpace load(const std::string& path);
  void save(const std::string& path) const;

  friend bool operator==(const DesignSpace&, const DesignSpace&);

 private:
  std::vector<ParamSpec> params_;
};

// The 20-parameter out-of-order core space, in table order.
DesignSpace canonical_space();

}  // namespace metadse
