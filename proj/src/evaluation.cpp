#include "metadse/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/meta_trainer.hpp"
#include "metadse/parallel.hpp"
#include "metadse/rng.hpp"
#include "metadse/text.hpp"

namespace metadse {

namespace {

void require_pair(std::span<const double> pred, std::span<const double> actual, const char* what) {
  if (pred.size() != actual.size())
    throw ContractError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(actual.size()) + " actual values");
  if (pred.empty()) throw ContractError(std::string(what) + ": empty input");
}

const char* kOutputNames[2] = {"ipc", "power"};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> actual) {
  require_pair(pred, actual, "rmse");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (actual[i] - pred[i]) * (actual[i] - pred[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mape(std::span<const double> pred, std::span<const double> actual) {
  require_pair(pred, actual, "mape");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (actual[i] == 0.0) throw DivisionByZero("mape: actual value at index " + std::to_string(i) + " is zero");
    s += std::abs(actual[i] - pred[i]) / std::abs(actual[i]);
  }
  return s / static_cast<double>(pred.size()) * 100.0;
}

double explained_variance(std::span<const double> pred, std::span<const double> actual) {
  require_pair(pred, actual, "explained_variance");
  double mean = 0;
  for (double y : actual) mean += y;
  mean /= static_cast<double>(actual.size());
  double res = 0, tot = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (tot == 0.0) throw ContractError("explained_variance: actual values have zero variance");
  return 1.0 - res / tot;
}

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  out.n = values.size();
  if (values.empty()) return out;
  double s = 0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    const double sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
    out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

double geomean(std::span<const double> values) {
  if (values.empty()) throw ContractError("geomean of an empty set");
  double s = 0;
  for (double v : values) s += std::log(std::max(v, 1e-12));
  return std::exp(s / static_cast<double>(values.size()));
}

double EvalReport::aggregate(const std::string& output, const std::string& metric) const {
  double s = 0;
  std::size_t n = 0;
  for (const auto& w : workloads) {
    auto it = w.outputs.find(output);
    if (it == w.outputs.end()) continue;
    const MetricSummary& m = it->second;
    s += metric == "rmse" ? m.rmse.mean : metric == "mape" ? m.mape.mean : m.ev.mean;
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double EvalReport::geomean_rmse(const std::string& output) const {
  std::vector<double> v;
  for (const auto& w : workloads) {
    auto it = w.outputs.find(output);
    if (it != w.outputs.end()) v.push_back(it->second.rmse.mean);
  }
  return v.empty() ? 0.0 : geomean(v);
}

std::size_t EvalReport::failed() const {
  std::size_t n = 0;
  for (const auto& w : workloads) n += w.failed;
  return n;
}

std::string EvalReport::to_csv(const std::string& arm) const {
  std::ostringstream os;
  for (const auto& [k, v] : metadata) os << "# " << k << " = " << v << '\n';
  os << "arm,workload,output,metric,mean,ci95,n,failed,task_digest\n";
  char digest[17];
  for (const auto& w : workloads) {
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(w.task_digest));
    for (const auto& [out, m] : w.outputs) {
      const std::pair<const char*, const MeanCi*> rows[] = {{"rmse", &m.rmse}, {"mape", &m.mape}, {"ev", &m.ev}};
      for (const auto& [name, ci] : rows)
        os << arm << ',' << w.workload_id << ',' << out << ',' << name << ',' << format_double(ci->mean) << ','
           << format_double(ci->half_width) << ',' << ci->n << ',' << w.failed << ',' << digest << '\n';
    }
  }
  return os.str();
}

std::string EvalReport::to_markdown(const std::string& title) const {
  std::ostringstream os;
  os << "## " << title << "\n\n";
  // The full configuration lives in the CSV; Markdown keeps hashes and seeds.
  for (const auto& [k, v] : metadata)
    if (k.find(".config.") == std::string::npos) os << "- " << k << ": `" << v << "`\n";
  os << "\n| workload | output | RMSE | MAPE (%) | EV | tasks | failed |\n|---|---|---|---|---|---|---|\n";
  std::vector<std::string> outputs;
  for (const auto& w : workloads)
    for (const auto& [out, m] : w.outputs) {
      os << "| " << w.workload_id << " | " << out << " | " << fixed(m.rmse.mean) << " ± " << fixed(m.rmse.half_width)
         << " | " << fixed(m.mape.mean, 2) << " ± " << fixed(m.mape.half_width, 2) << " | " << fixed(m.ev.mean)
         << " ± " << fixed(m.ev.half_width) << " | " << w.tasks << " | " << w.failed << " |\n";
      if (std::find(outputs.begin(), outputs.end(), out) == outputs.end()) outputs.push_back(out);
    }
  for (const auto& out : outputs)
    os << "| **GEOMEAN** | " << out << " | " << fixed(geomean_rmse(out)) << " | " << fixed(aggregate(out, "mape"), 2)
       << " (mean) | " << fixed(aggregate(out, "ev")) << " (mean) | | " << failed() << " |\n";
  return os.str();
}

EvalReport run_protocol(const Surrogate& model, const TargetScaler& scaler, const Arm& arm,
                        const std::vector<WorkloadSource>& sources, const ProtocolConfig& config, std::size_t threads) {
  if (!arm.theta) throw ContractError("evaluation arm '" + arm.name + "' has no parameters");
  if (config.tasks == 0) throw ConfigError("evaluation needs at least one task per workload");
  if (arm.mask) arm.mask->validate();
  const auto columns = scaler.columns();
  const AdaptOptions opt{config.steps, LrSchedule::cosine(config.lr, config.steps), arm.mask && arm.learn_mask};

  EvalReport report;
  for (const auto& src : sources) {
    const auto tasks = make_tasks(src, config.tasks, config.support, config.query,
                                  derive_seed(config.seed, {hash_tag("eval"), hash_tag(src.id())}), threads);
    struct TaskResult {
      bool ok = false;
      std::size_t resets = 0;
      std::vector<std::array<double, 3>> metrics;  // per output: rmse, mape, ev
    };
    std::vector<TaskResult> results(tasks.size());
    parallel_for(tasks.size(), threads, [&](std::size_t i) {
      TaskResult& r = results[i];
      try {
        const Episode ep = to_episode(tasks[i], scaler);
        const Adapted a = adapt(model, *arm.theta, ep.support, opt, arm.mask);
        const auto pred = model.forward(a.theta, ep.query.features, a.mask ? &*a.mask : nullptr);
        for (std::size_t k = 0; k < columns.size(); ++k) {
          std::vector<double> p, y;
          for (std::size_t s = 0; s < ep.query_samples.size(); ++s) {
            p.push_back(scaler.to_label(columns[k], pred.outputs(s, k)));
            y.push_back(scaler.label_of(columns[k], ep.query_samples[s].labels));
          }
          r.metrics.push_back({rmse(p, y), mape(p, y), explained_variance(p, y)});
        }
        r.resets = a.mask_resets;
        r.ok = true;
      } catch (const Error&) {
        r.ok = false;
      }
    });

    WorkloadReport w;
    w.workload_id = src.id();
    w.tasks = tasks.size();
    std::vector<std::uint64_t> digests;
    for (const auto& t : tasks) digests.push_back(t.digest());
    w.task_digest = combine_digests(digests);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      std::vector<double> r, m, e;
      for (const auto& res : results) {
        if (!res.ok) continue;
        r.push_back(res.metrics[k][0]);
        m.push_back(res.metrics[k][1]);
        e.push_back(res.metrics[k][2]);
      }
      w.outputs[kOutputNames[columns[k]]] = MetricSummary{mean_ci(r), mean_ci(m), mean_ci(e)};
    }
    for (const auto& res : results) {
      if (!res.ok) ++w.failed;
      w.mask_resets += res.resets;
    }
    report.workloads.push_back(std::move(w));
  }
  report.metadata["arm"] = arm.name;
  report.metadata["eval_seed"] = std::to_string(config.seed);
  report.metadata["tasks_per_workload"] = std::to_string(config.tasks);
  report.metadata["support"] = std::to_string(config.support);
  report.metadata["query"] = std::to_string(config.query);
  report.metadata["adapt_steps"] = std::to_string(config.steps);
  report.metadata["adapt_lr"] = format_double(config.lr);
  report.metadata["mask"] = arm.mask ? (arm.learn_mask ? "learnable" : "frozen") : "none";
  return report;
}

bool AblationResult::identical_task_streams() const {
  for (std::size_t a = 1; a < reports.size(); ++a) {
    if (reports[a].workloads.size() != reports[0].workloads.size()) return false;
    for (std::size_t w = 0; w < reports[a].workloads.size(); ++w)
      if (reports[a].workloads[w].task_digest != reports[0].workloads[w].task_digest) return false;
  }
  return true;
}

std::string AblationResult::to_csv() const {
  std::ostringstream os;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::string body = reports[a].to_csv(arms[a]);
    if (a > 0) {
      // Keep one header: drop metadata and column lines of later arms.
      std::istringstream is(body);
      std::string line, rest;
      while (std::getline(is, line))
        if (!line.empty() && line[0] != '#' && line.rfind("arm,", 0) != 0) rest += line + "\n";
      body = rest;
    }
    os << body;
  }
  return os.str();
}

std::string AblationResult::to_markdown() const {
  std::ostringstream os;
  os << "## Ablation\n\n";
  if (!reports.empty())
    for (const auto& [k, v] : reports[0].metadata)
      if (k != "arm" && k != "mask" && k.find(".config.") == std::string::npos) os << "- " << k << ": `" << v << "`\n";
  os << "- identical task streams: " << (identical_task_streams() ? "yes" : "NO") << "\n\n";
  if (reports.empty() || reports[0].workloads.empty()) return os.str();

  std::vector<std::string> outputs;
  for (const auto& [out, m] : reports[0].workloads[0].outputs) outputs.push_back(out);
  for (const auto& out : outputs) {
    os << "### " << out << " RMSE (mean ± 95% CI)\n\n| workload |";
    for (const auto& a : arms) os << ' ' << a << " |";
    for (std::size_t a = 1; a < arms.size(); ++a) os << " Δ " << arms[0] << " vs " << arms[a] << " |";
    os << "\n|---|";
    for (std::size_t a = 0; a < 2 * arms.size() - 1; ++a) os << "---|";
    os << '\n';
    for (std::size_t w = 0; w < reports[0].workloads.size(); ++w) {
      os << "| " << reports[0].workloads[w].workload_id << " |";
      std::vector<double> means;
      for (const auto& r : reports) {
        const auto& m = r.workloads[w].outputs.at(out).rmse;
        means.push_back(m.mean);
        os << ' ' << fixed(m.mean) << " ± " << fixed(m.half_width) << " |";
      }
      for (std::size_t a = 1; a < means.size(); ++a)
        os << ' ' << fixed(means[a] > 0 ? 100.0 * (means[0] - means[a]) / means[a] : 0.0, 1) << "% |";
      os << '\n';
    }
    os << "| **GEOMEAN** |";
    std::vector<double> g;
    for (const auto& r : reports) {
      g.push_back(r.geomean_rmse(out));
      os << ' ' << fixed(g.back()) << " |";
    }
    for (std::size_t a = 1; a < g.size(); ++a)
      os << ' ' << fixed(g[a] > 0 ? 100.0 * (g[0] - g[a]) / g[a] : 0.0, 1) << "% |";
    os << "\n\n";
  }
  return os.str();
}

AblationResult ablation(const Surrogate& model, const TargetScaler& scaler, const std::vector<Arm>& arms,
                        const std::vector<WorkloadSource>& sources, const ProtocolConfig& config, std::size_t threads) {
  AblationResult out;
  for (const auto& arm : arms) {
    out.arms.push_back(arm.name);
    out.reports.push_back(run_protocol(model, scaler, arm, sources, config, threads));
  }
  return out;
}

}  // namespace metadse
