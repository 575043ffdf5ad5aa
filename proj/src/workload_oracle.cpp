#include "metadse/workload_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/rng.hpp"
#include "metadse/text.hpp"

namespace metadse {

namespace {

// Unit-coefficient layout. Each entry u ∈ [0,1] maps linearly onto the range
// noted beside it.
enum Coeff : std::size_t {
  kIlp,          // inherent ILP, 1..5
  kRobKnee,      // ROB saturation knee, 16..166 entries
  kIqKnee,       // 6..46
  kLsqKnee,      // 4..34
  kRfKnee,       // 16..136
  kFqKnee,       // 2..22
  kMemFrac,      // memory op share, 0.15..0.40
  kFpFrac,       // 0..0.40
  kMulDivFrac,   // 0.01..0.10
  kMispredict,   // mispredicts per instruction, 0.002..0.022
  kTournament,   // tournament/bimode mispredict ratio, 0.5..0.95
  kRasSens,      // 0..0.5
  kBtbSens,      // 0..0.5
  kL1Miss,       // L1 miss rate at 16 KB, 0.01..0.13
  kL1Exp,        // capacity exponent, 0.2..0.8
  kL2Miss,       // L2 local miss rate at 128 KB, 0.05..0.65
  kL2Exp,        // 0.2..1.0
  kSpatial,      // line-size sensitivity, 0..0.6
  kAssocGain,    // miss reduction from 4-way, 0..0.3
  kMlpKnee,      // memory-level parallelism knee, 32..232
  kPowerBase,    // watts, 1.5..4.5
  kPowerWidth,   // watts at full size, 0.2..1.7 (this and the next six)
  kPowerRob,
  kPowerQueues,
  kPowerRf,
  kPowerAlus,
  kPowerL1,
  kPowerL2,
  kPowerFreq,    // W/GHz³, 0.05..0.30
  kPowerActive,  // W per (IPC·GHz), 0.2..1.2
};
static_assert(kPowerActive + 1 == WorkloadSurface::kCoreCoeffs);

constexpr double kMaxInteraction = 0.15;
constexpr double kMemLatencyNs = 80.0;
constexpr double kL2LatencyCycles = 12.0;
constexpr double kBranchPenalty = 12.0;

double lerp(double lo, double hi, double u) { return lo + (hi - lo) * u; }

constexpr std::array<const char*, 20> kNames = {
    "Core Frequency", "Pipeline Width",  "Fetch Buffer",   "Fetch Queue", "Branch Predictor",
    "RAS Size",       "BTB Size",        "ROB Size",       "Int/Fp RF Number", "Inst Queue",
    "Load/Store Queue", "IntALU",        "IntMultDiv",     "FpALU",       "FpMultDiv",
    "Cacheline",      "L1 Cache Size",   "L1 Cache Assoc.", "L2 Cache Size", "L2 Cache Assoc.",
};

// Configuration values in table units plus normalized features.
struct Core {
  std::array<double, 20> v{};
  std::array<double, 20> f{};
};

Core bind(const DesignSpace& space, const DesignPoint& point) {
  space.validate(point);
  const FeatureVector feats = space.encode(point);
  Core c;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    std::size_t idx = i;
    if (i >= space.dims() || space.param(i).name != kNames[i]) idx = space.find(kNames[i]);
    c.v[i] = space.value(point, idx);
    c.f[i] = feats[idx];
  }
  return c;
}

std::uint64_t point_hash(const DesignPoint& p) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (auto i : p.indices) h = mix64(h ^ i);
  return h;
}

}  // namespace

Labels WorkloadSurface::evaluate_noiseless(const DesignSpace& space, const DesignPoint& point) const {
  if (coeffs.size() != kCoreCoeffs + interactions.size())
    throw ContractError("workload surface '" + id + "' has an inconsistent coefficient vector");
  const Core core = bind(space, point);
  const auto& v = core.v;
  const auto& u = coeffs;

  const double freq = v[0], width = v[1], fetch_buf = v[2], fetch_q = v[3];
  const bool tournament = v[4] != 0.0;
  const double ras = v[5], btb = v[6], rob = v[7], rf = v[8], iq = v[9], lsq = v[10];
  const double int_alu = v[11], int_md = v[12], fp_alu = v[13], fp_md = v[14];
  const double line = v[15], l1 = v[16], l1_assoc = v[17], l2 = v[18], l2_assoc = v[19];

  const double ilp = lerp(1.0, 5.0, u[kIlp]);
  const double mem_frac = lerp(0.15, 0.40, u[kMemFrac]);
  const double fp_frac = lerp(0.0, 0.40, u[kFpFrac]);
  const double md_frac = lerp(0.01, 0.10, u[kMulDivFrac]);
  auto sat = [](double size, double knee) { return size / (size + knee); };

  // Issue rate: the tightest structural bottleneck.
  const double peak = 1.5 * ilp;
  double issue = width;
  issue = std::min(issue, peak * sat(rob, lerp(16, 166, u[kRobKnee])));
  issue = std::min(issue, peak * sat(iq, lerp(6, 46, u[kIqKnee])));
  issue = std::min(issue, peak * sat(lsq, 4.0 * mem_frac * lerp(4, 34, u[kLsqKnee])));
  issue = std::min(issue, peak * sat(rf - 32.0, lerp(16, 136, u[kRfKnee])));
  issue = std::min(issue, 2.0 * (fetch_buf / 4.0) * sat(fetch_q, lerp(2, 22, u[kFqKnee])));
  issue = std::min(issue, int_alu / std::max(1.0 - fp_frac - mem_frac, 0.1));
  issue = std::min(issue, (fp_alu + 0.5 * fp_md) / std::max(fp_frac, 0.02));
  issue = std::min(issue, (int_md + fp_md) / (3.0 * md_frac));

  const double branch_cpi = lerp(0.002, 0.022, u[kMispredict]) * kBranchPenalty *
                            (tournament ? lerp(0.5, 0.95, u[kTournament]) : 1.0) *
                            (1.0 + lerp(0, 0.5, u[kRasSens]) * 16.0 / ras) *
                            (1.0 + lerp(0, 0.5, u[kBtbSens]) * 1024.0 / btb);

  const double spatial = std::pow(64.0 / line, lerp(0, 0.6, u[kSpatial]));
  const double assoc_gain = lerp(0, 0.3, u[kAssocGain]);
  const double l1_miss = std::min(1.0, lerp(0.01, 0.13, u[kL1Miss]) * std::pow(l1 / 16.0, -lerp(0.2, 0.8, u[kL1Exp])) *
                                           spatial * (l1_assoc >= 4 ? 1.0 - assoc_gain : 1.0));
  const double l2_miss = std::min(1.0, lerp(0.05, 0.65, u[kL2Miss]) * std::pow(l2 / 128.0, -lerp(0.2, 1.0, u[kL2Exp])) *
                                           spatial * (l2_assoc >= 4 ? 1.0 - assoc_gain : 1.0));
  const double mlp = 1.0 + rob / lerp(32, 232, u[kMlpKnee]);
  const double mem_cpi = mem_frac * l1_miss * (kL2LatencyCycles + l2_miss * kMemLatencyNs * freq) / mlp;

  double interaction = 1.0;
  for (std::size_t k = 0; k < interactions.size(); ++k) {
    const double strength = kMaxInteraction * (2.0 * u[kCoreCoeffs + k] - 1.0);
    const auto& it = interactions[k];
    interaction *= 1.0 + strength * (2.0 * core.f[it.a] - 1.0) * (2.0 * core.f[it.b] - 1.0);
  }

  Labels out;
  out.ipc = interaction / (1.0 / issue + branch_cpi + mem_cpi);

  const auto& f = core.f;
  const double structures = lerp(0.2, 1.7, u[kPowerWidth]) * f[1] + lerp(0.2, 1.7, u[kPowerRob]) * f[7] +
                            lerp(0.2, 1.7, u[kPowerQueues]) * 0.5 * (f[9] + f[10]) +
                            lerp(0.2, 1.7, u[kPowerRf]) * f[8] +
                            lerp(0.2, 1.7, u[kPowerAlus]) * 0.25 * (f[11] + f[12] + f[13] + f[14]) +
                            lerp(0.2, 1.7, u[kPowerL1]) * f[16] + lerp(0.2, 1.7, u[kPowerL2]) * f[18];
  out.power = lerp(1.5, 4.5, u[kPowerBase]) + structures + lerp(0.05, 0.30, u[kPowerFreq]) * freq * freq * freq +
              lerp(0.2, 1.2, u[kPowerActive]) * out.ipc * freq;
  return out;
}

Labels WorkloadSurface::evaluate(const DesignSpace& space, const DesignPoint& point, std::uint64_t sample_seed) const {
  Labels l = evaluate_noiseless(space, point);
  if (noise > 0) {
    Rng rng(derive_seed(noise_seed, {point_hash(point), sample_seed}));
    l.ipc *= std::exp(noise * rng.normal());
    l.power *= std::exp(noise * rng.normal());
  }
  return l;
}

std::string workload_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%02zu", index);
  return buf;
}

std::vector<WorkloadSurface> gen_family(std::size_t n_workloads, const FamilyOptions& options, std::uint64_t seed) {
  if (n_workloads < 2) throw ContractError("a workload family needs at least two workloads");
  const double d = options.dissimilarity;
  if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("dissimilarity must lie in [0, 1]");
  if (!(options.noise >= 0.0)) throw ConfigError("noise scale must be non-negative");

  // Pairs among parameters 2..19; frequency and width stay out so that the
  // monotone sweeps over them hold exactly.
  std::vector<Interaction> all;
  for (std::size_t a = 2; a < kNames.size(); ++a)
    for (std::size_t b = a + 1; b < kNames.size(); ++b) all.push_back({a, b});
  Rng pair_rng(derive_seed(seed, {hash_tag("pairs")}));
  pair_rng.shuffle(all.begin(), all.end());
  const std::size_t n_pairs = std::min(options.interactions, all.size());
  std::vector<Interaction> pairs(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pairs));
  std::sort(pairs.begin(), pairs.end(), [](auto& x, auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });

  const std::size_t n_coeffs = WorkloadSurface::kCoreCoeffs + n_pairs;
  Rng base_rng(derive_seed(seed, {hash_tag("base")}));
  std::vector<double> base(n_coeffs);
  for (double& b : base) b = base_rng.uniform();

  std::vector<WorkloadSurface> family;
  family.reserve(n_workloads);
  for (std::size_t w = 0; w < n_workloads; ++w) {
    Rng rng(derive_seed(seed, {hash_tag("workload"), w}));
    WorkloadSurface s;
    s.id = workload_name(w);
    s.interactions = pairs;
    s.noise = options.noise;
    s.noise_seed = derive_seed(seed, {hash_tag("noise"), w});
    s.coeffs.resize(n_coeffs);
    for (std::size_t i = 0; i < n_coeffs; ++i) s.coeffs[i] = (1.0 - d) * base[i] + d * rng.uniform();
    family.push_back(std::move(s));
  }
  return family;
}

struct WorkloadSource::State {
  std::string id;
  DesignSpace space;
  std::optional<WorkloadSurface> surface;
  std::vector<Sample> rows;
};

WorkloadSource WorkloadSource::synthetic(WorkloadSurface surface, DesignSpace space) {
  auto s = std::make_shared<State>();
  s->id = surface.id;
  s->space = std::move(space);
  s->surface = std::move(surface);
  return WorkloadSource(std::move(s));
}

WorkloadSource WorkloadSource::dataset(std::string id, DesignSpace space, std::vector<Sample> rows) {
  std::set<DesignPoint> seen;
  for (auto& r : rows) {
    space.validate(r.point);
    if (!seen.insert(r.point).second) throw DuplicateError("workload '" + id + "' contains a duplicate design point");
    if (!(std::isfinite(r.labels.ipc) && std::isfinite(r.labels.power) && r.labels.ipc > 0 && r.labels.power > 0))
      throw SchemaError("workload '" + id + "' has a non-positive or non-finite label");
    if (r.features.empty()) r.features = space.encode(r.point);
  }
  auto s = std::make_shared<State>();
  s->id = std::move(id);
  s->space = std::move(space);
  s->rows = std::move(rows);
  return WorkloadSource(std::move(s));
}

const std::string& WorkloadSource::id() const noexcept { return s_->id; }
const DesignSpace& WorkloadSource::space() const noexcept { return s_->space; }
bool WorkloadSource::is_synthetic() const noexcept { return s_->surface.has_value(); }
const WorkloadSurface* WorkloadSource::surface() const noexcept { return s_->surface ? &*s_->surface : nullptr; }
const std::vector<Sample>& WorkloadSource::rows() const noexcept { return s_->rows; }

std::uint64_t WorkloadSource::capacity() const {
  return is_synthetic() ? s_->space.cardinality() : s_->rows.size();
}

Sample WorkloadSource::label(const DesignPoint& point, std::uint64_t sample_seed) const {
  if (!is_synthetic()) throw ContractError("label() needs a synthetic source");
  Sample s;
  s.point = point;
  s.features = s_->space.encode(point);
  s.labels = s_->surface->evaluate(s_->space, point, sample_seed);
  return s;
}

std::vector<Sample> WorkloadSource::draw(std::size_t n, std::uint64_t seed) const {
  if (n > capacity())
    throw SourceExhausted("workload '" + id() + "' has " + std::to_string(capacity()) + " distinct points, " +
                          std::to_string(n) + " requested");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(n);
  if (is_synthetic()) {
    std::set<DesignPoint> seen;
    const auto& space = s_->space;
    while (out.size() < n) {
      DesignPoint p;
      p.indices.resize(space.dims());
      for (std::size_t i = 0; i < space.dims(); ++i)
        p.indices[i] = static_cast<std::uint32_t>(rng.below(space.param(i).size()));
      if (!seen.insert(p).second) continue;
      out.push_back(label(p, derive_seed(seed, {out.size()})));
    }
  } else {
    // Partial Fisher-Yates over row indices.
    std::vector<std::size_t> idx(s_->rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      out.push_back(s_->rows[idx[i]]);
    }
  }
  return out;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ContractError("wasserstein_1d needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  if (n == m) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(n);
  }
  // Integrate |F_a⁻¹(t) − F_b⁻¹(t)| over the merged quantile grid, measured in
  // exact integer units of 1/(n·m).
  std::size_t i = 0, j = 0;
  unsigned long long t = 0;
  double total = 0;
  while (i < n && j < m) {
    const unsigned long long ea = static_cast<unsigned long long>(i + 1) * m;
    const unsigned long long eb = static_cast<unsigned long long>(j + 1) * n;
    const unsigned long long next = std::min(ea, eb);
    total += static_cast<double>(next - t) * std::abs(a[i] - b[j]);
    t = next;
    if (ea == next) ++i;
    if (eb == next) ++j;
  }
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

double mean_off_diagonal(const Matrix& m) {
  double s = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      s += m(i, j);
      ++count;
    }
  return count ? s / static_cast<double>(count) : 0.0;
}

SimilarityMatrix similarity_matrix(const std::vector<WorkloadSource>& sources, std::size_t n_probe, std::uint64_t seed) {
  if (sources.size() < 2) throw ContractError("similarity needs at least two workloads");
  if (n_probe == 0) throw ContractError("similarity needs at least one probe point");
  const auto probes = sources.front().space().sample_uniform(n_probe, derive_seed(seed, {hash_tag("probe")}));
  std::vector<std::vector<double>> labels(sources.size());
  SimilarityMatrix out;
  for (std::size_t w = 0; w < sources.size(); ++w) {
    const auto& src = sources[w];
    out.ids.push_back(src.id());
    if (src.is_synthetic()) {
      for (std::size_t j = 0; j < probes.size(); ++j)
        labels[w].push_back(src.surface()->evaluate(src.space(), probes[j], derive_seed(seed, {j})).ipc);
    } else {
      for (const auto& r : src.rows()) labels[w].push_back(r.labels.ipc);
      if (labels[w].empty()) throw ContractError("workload '" + src.id() + "' has no rows");
    }
  }
  out.distance = Matrix(sources.size(), sources.size());
  for (std::size_t a = 0; a < sources.size(); ++a)
    for (std::size_t b = a + 1; b < sources.size(); ++b)
      out.distance(a, b) = out.distance(b, a) = wasserstein_1d(labels[a], labels[b]);
  return out;
}

std::string SimilarityMatrix::to_csv() const {
  std::ostringstream os;
  os << "workload";
  for (const auto& id : ids) os << ',' << id;
  os << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    os << ids[i];
    for (std::size_t j = 0; j < ids.size(); ++j) os << ',' << format_double(distance(i, j));
    os << '\n';
  }
  return os.str();
}

std::string SimilarityMatrix::render() const {
  static constexpr char kShades[] = " .:-=+*#%@";
  double mx = 0;
  for (double x : distance.data()) mx = std::max(mx, x);
  std::ostringstream os;
  os << "      ";
  for (const auto& id : ids) os << ' ' << id.substr(0, 3);
  os << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::string name = ids[i].substr(0, 5);
    name.resize(6, ' ');
    os << name;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const double r = mx > 0 ? distance(i, j) / mx : 0.0;
      const auto shade = static_cast<std::size_t>(std::lround(r * 9.0));
      os << ' ' << std::string(3, kShades[std::min<std::size_t>(shade, 9)]);
    }
    os << '\n';
  }
  os << "scale: ' ' = 0, '@' = " << format_double(mx) << " (W1 on IPC)\n";
  return os.str();
}

}  // namespace metadse
