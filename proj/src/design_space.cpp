#include "metadse/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/rng.hpp"
#include "metadse/text.hpp"

namespace metadse {

ParamSpec ParamSpec::range(std::string name, double start, double end, double stride) {
  if (!(stride > 0) || end < start) throw ContractError("bad range for parameter '" + name + "'");
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::Range;
  p.range_start = start;
  p.range_end = end;
  p.range_stride = stride;
  // Both endpoints inclusive; the end is kept only when it lies on the stride grid.
  const auto steps = static_cast<std::size_t>(std::floor((end - start) / stride + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) p.candidates.push_back(start + static_cast<double>(k) * stride);
  return p;
}

ParamSpec ParamSpec::enumerated(std::string name, std::vector<double> values) {
  if (values.empty()) throw ContractError("parameter '" + name + "' has no candidates");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw ContractError("candidates of '" + name + "' must be strictly increasing");
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::Enumerated;
  p.candidates = std::move(values);
  return p;
}

ParamSpec ParamSpec::categorical(std::string name, std::vector<std::string> labels) {
  if (labels.empty()) throw ContractError("parameter '" + name + "' has no candidates");
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::Categorical;
  for (std::size_t i = 0; i < labels.size(); ++i) p.candidates.push_back(static_cast<double>(i));
  p.labels = std::move(labels);
  return p;
}

long ParamSpec::index_of(double value) const {
  auto it = std::find(candidates.begin(), candidates.end(), value);
  return it == candidates.end() ? -1 : static_cast<long>(it - candidates.begin());
}

long ParamSpec::index_of_label(const std::string& label) const {
  if (kind == ParamKind::Categorical) {
    auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? -1 : static_cast<long>(it - labels.begin());
  }
  double v = 0;
  if (!parse_double(label, v)) return -1;
  return index_of(v);
}

std::string ParamSpec::format_candidate(std::size_t index) const {
  if (kind == ParamKind::Categorical) return labels.at(index);
  return format_double(candidates.at(index));
}

DesignSpace::DesignSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
  if (params_.empty()) throw ContractError("design space needs at least one parameter");
  for (const auto& p : params_) {
    if (p.candidates.empty()) throw ContractError("parameter '" + p.name + "' has no candidates");
    if (p.candidates.size() > 0xffffffffULL) throw ContractError("too many candidates in '" + p.name + "'");
  }
}

std::size_t DesignSpace::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ContractError("design space has no parameter named '" + name + "'");
}

std::uint64_t DesignSpace::cardinality() const {
  std::uint64_t n = 1;
  for (const auto& p : params_) n *= p.size();
  return n;
}

bool DesignSpace::valid(const DesignPoint& p) const noexcept {
  if (p.indices.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (p.indices[i] >= params_[i].size()) return false;
  return true;
}

void DesignSpace::validate(const DesignPoint& p) const {
  if (p.indices.size() != params_.size())
    throw InvalidPoint("design point has " + std::to_string(p.indices.size()) + " indices, space has " +
                       std::to_string(params_.size()) + " parameters");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (p.indices[i] >= params_[i].size())
      throw InvalidPoint("index " + std::to_string(p.indices[i]) + " out of range for '" + params_[i].name + "'");
}

double DesignSpace::value(const DesignPoint& p, std::size_t i) const {
  return params_.at(i).candidates.at(p.indices.at(i));
}

namespace {

double normalized(const ParamSpec& spec, std::size_t index) {
  if (spec.size() == 1) return 0.0;
  if (spec.kind == ParamKind::Categorical)
    return static_cast<double>(index) / static_cast<double>(spec.size() - 1);
  return (spec.candidates[index] - spec.min()) / (spec.max() - spec.min());
}

}  // namespace

FeatureVector DesignSpace::encode(const DesignPoint& p) const {
  validate(p);
  FeatureVector f(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) f[i] = normalized(params_[i], p.indices[i]);
  return f;
}

DesignPoint DesignSpace::decode(const FeatureVector& features) const {
  if (features.size() != params_.size())
    throw InvalidVector("feature vector has length " + std::to_string(features.size()) + ", expected " +
                        std::to_string(params_.size()));
  DesignPoint p;
  p.indices.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!std::isfinite(features[i])) throw InvalidVector("non-finite feature at position " + std::to_string(i));
    std::size_t best = 0;
    double best_dist = std::abs(features[i] - normalized(params_[i], 0));
    for (std::size_t k = 1; k < params_[i].size(); ++k) {
      const double d = std::abs(features[i] - normalized(params_[i], k));
      if (d < best_dist) {
        best = k;
        best_dist = d;
      }
    }
    p.indices[i] = static_cast<std::uint32_t>(best);
  }
  return p;
}

std::vector<DesignPoint> DesignSpace::sample_uniform(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw ContractError("sample_uniform needs n >= 1");
  Rng rng(seed);
  std::vector<DesignPoint> out(n);
  for (auto& p : out) {
    p.indices.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      p.indices[i] = static_cast<std::uint32_t>(rng.below(params_[i].size()));
  }
  return out;
}

std::string DesignSpace::to_text() const {
  std::ostringstream os;
  os << "# name = kind: candidates\n";
  for (const auto& p : params_) {
    os << p.name << " = ";
    switch (p.kind) {
      case ParamKind::Range:
        os << "range: " << format_double(p.range_start) << ':' << format_double(p.range_end) << ':'
           << format_double(p.range_stride);
        break;
      case ParamKind::Enumerated:
        os << "enumerated: ";
        for (std::size_t k = 0; k < p.size(); ++k) os << (k ? ", " : "") << format_double(p.candidates[k]);
        break;
      case ParamKind::Categorical:
        os << "categorical: ";
        for (std::size_t k = 0; k < p.size(); ++k) os << (k ? ", " : "") << p.labels[k];
        break;
    }
    os << '\n';
  }
  return os.str();
}

DesignSpace DesignSpace::from_text(const std::string& text) {
  std::vector<ParamSpec> params;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const auto colon = line.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos)
      throw ParseError("space line " + std::to_string(lineno) + ": expected 'name = kind: candidates'");
    const std::string name = trim(line.substr(0, eq));
    const std::string kind = trim(line.substr(eq + 1, colon - eq - 1));
    const std::string rest = trim(line.substr(colon + 1));
    auto numbers = [&](const std::vector<std::string>& items) {
      std::vector<double> v;
      for (const auto& item : items) {
        double x = 0;
        if (!parse_double(trim(item), x))
          throw ParseError("space line " + std::to_string(lineno) + ": bad number '" + item + "'");
        v.push_back(x);
      }
      return v;
    };
    if (kind == "range") {
      auto v = numbers(split(rest, ':'));
      if (v.size() != 3) throw ParseError("space line " + std::to_string(lineno) + ": range needs start:end:stride");
      params.push_back(ParamSpec::range(name, v[0], v[1], v[2]));
    } else if (kind == "enumerated") {
      params.push_back(ParamSpec::enumerated(name, numbers(split(rest, ','))));
    } else if (kind == "categorical") {
      std::vector<std::string> labels;
      for (const auto& l : split(rest, ',')) labels.push_back(trim(l));
      params.push_back(ParamSpec::categorical(name, std::move(labels)));
    } else {
      throw ParseError("space line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
    }
  }
  return DesignSpace(std::move(params));
}

DesignSpace DesignSpace::load(const std::string& path) { return from_text(read_file(path)); }

void DesignSpace::save(const std::string& path) const { write_file(path, to_text()); }

bool operator==(const DesignSpace& a, const DesignSpace& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    const auto& x = a.params_[i];
    const auto& y = b.params_[i];
    if (x.name != y.name || x.kind != y.kind || x.candidates != y.candidates || x.labels != y.labels) return false;
  }
  return true;
}

DesignSpace canonical_space() {
  return DesignSpace({
      ParamSpec::enumerated("Core Frequency", {1, 1.5, 2, 2.5, 3}),
      ParamSpec::range("Pipeline Width", 1, 12, 1),
      ParamSpec::enumerated("Fetch Buffer", {16, 32, 64}),
      ParamSpec::range("Fetch Queue", 8, 48, 4),
      ParamSpec::categorical("Branch Predictor", {"BiModeBP", "TournamentBP"}),
      ParamSpec::range("RAS Size", 16, 40, 2),
      ParamSpec::enumerated("BTB Size", {1024, 2048, 4096}),
      ParamSpec::range("ROB Size", 32, 256, 16),
      ParamSpec::range("Int/Fp RF Number", 64, 256, 8),
      ParamSpec::range("Inst Queue", 16, 80, 8),
      ParamSpec::range("Load/Store Queue", 20, 48, 4),
      ParamSpec::range("IntALU", 3, 8, 1),
      ParamSpec::range("IntMultDiv", 1, 4, 1),
      ParamSpec::range("FpALU", 1, 4, 1),
      ParamSpec::range("FpMultDiv", 1, 4, 1),
      ParamSpec::enumerated("Cacheline", {32, 64}),
      ParamSpec::enumerated("L1 Cache Size", {16, 32, 64}),
      ParamSpec::enumerated("L1 Cache Assoc.", {2, 4}),
      ParamSpec::enumerated("L2 Cache Size", {128, 256}),
      ParamSpec::enumerated("L2 Cache Assoc.", {2, 4}),
  });
}

}  // namespace metadse
