// metadse: command-line driver for the pipeline stages.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metadse/errors.hpp"
#include "metadse/pipeline.hpp"
#include "metadse/run_config.hpp"
#include "metadse/text.hpp"

namespace fs = std::filesystem;
using namespace metadse;

namespace {

// ---- logging ---------------------------------------------------------------

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("METADSE_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet" || v == "0" || v == "error") return LogLevel::Quiet;
  if (v == "debug" || v == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel current = log_level();
  if (level <= current) std::cerr << "[metadse] " << msg << '\n';
}

// ---- shared plumbing ---------------------------------------------------------

struct Common {
  std::string config_path;
  std::string space_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir = ".";
  bool dry_run = false;
  std::map<std::string, std::string> flag_overrides;  // config key -> value
  std::vector<std::string> sets;                       // raw key=value
};

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = load_run_config(c.config_path);
  if (!c.space_path.empty()) {
    try {
      cfg.space_text = read_file(c.space_path);
      DesignSpace::from_text(cfg.space_text);
    } catch (const Error& e) {
      throw ConfigError(std::string("--space: ") + e.what());
    }
  }
  cfg.apply(c.flag_overrides);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
  return cfg;
}

void print_dry_run(const std::string& stage, const RunConfig& cfg, const std::map<std::string, std::string>& inputs) {
  std::cout << "# stage = " << stage << "\n# config_hash = " << cfg.hash() << "\n# threads = " << cfg.threads << '\n';
  for (const auto& [k, v] : inputs) std::cout << "# input." << k << " = " << v << '\n';
  for (const auto& [k, v] : cfg.seeds()) std::cout << "# " << k << " = " << v << '\n';
  std::cout << cfg.to_text();
}

void info(const std::string& msg) { log(LogLevel::Info, msg); }

// ---- stages --------------------------------------------------------------------

int run_gen_data(const Common& c) {
  const RunConfig cfg = resolve(c);
  if (c.dry_run) {
    print_dry_run("gen-data", cfg, {{"out_dir", c.out_dir}});
    return 0;
  }
  gen_data_stage(cfg, c.out_dir, info);
  return 0;
}

int run_pretrain(const Common& c, const std::string& data_dir) {
  const RunConfig cfg = resolve(c);
  if (c.dry_run) {
    print_dry_run("pretrain", cfg, {{"data", data_dir}, {"out_dir", c.out_dir}});
    return 0;
  }
  pretrain_stage(cfg, data_dir, c.out_dir, info);
  return 0;
}

int run_extract_mask(const Common& c, const std::string& ckpt_path, const std::string& cand_path,
                     const std::string& out) {
  const RunConfig cfg = resolve(c);
  const std::string target = out.empty() ? (fs::path(c.out_dir) / "metadse.mdse").string() : out;
  if (c.dry_run) {
    print_dry_run("extract-mask", cfg, {{"checkpoint", ckpt_path}, {"candidates", cand_path}, {"out", target}});
    return 0;
  }
  extract_mask_stage(cfg, ckpt_path, cand_path, target, info);
  return 0;
}

int run_adapt(const Common& c, const std::string& ckpt_path, const std::string& mask_path, const std::string& data_dir,
              const std::string& workloads) {
  const RunConfig cfg = resolve(c);
  if (c.dry_run) {
    print_dry_run("adapt", cfg, {{"checkpoint", ckpt_path}, {"mask", mask_path}, {"data", data_dir}});
    return 0;
  }
  adapt_stage(cfg, ckpt_path, mask_path, data_dir, workloads, c.out_dir, info);
  return 0;
}

int run_evaluate(const Common& c, const std::string& ckpt_path, const std::string& mask_path,
                 const std::string& data_dir, const std::string& workloads) {
  const RunConfig cfg = resolve(c);
  if (c.dry_run) {
    print_dry_run("evaluate", cfg, {{"checkpoint", ckpt_path}, {"mask", mask_path}, {"data", data_dir}});
    return 0;
  }
  std::cout << evaluate_stage(cfg, ckpt_path, mask_path, data_dir, workloads, c.out_dir, info).markdown;
  return 0;
}

int run_ablate(const Common& c, const std::string& ckpt_path, const std::string& mask_path, const std::string& data_dir,
               const std::string& workloads, bool identity_mask) {
  const RunConfig cfg = resolve(c);
  if (mask_path.empty() == !identity_mask) throw ConfigError("ablate needs exactly one of --mask or --identity-mask");
  if (c.dry_run) {
    print_dry_run("ablate", cfg, {{"checkpoint", ckpt_path}, {"mask", mask_path}, {"data", data_dir}});
    return 0;
  }
  // The tables are written before a failed check throws, so print them from disk.
  try {
    std::cout << ablate_stage(cfg, ckpt_path, mask_path, identity_mask, data_dir, workloads, c.out_dir, info).markdown;
  } catch (const NumericError&) {
    const auto md = fs::path(c.out_dir) / "ablation.md";
    if (fs::exists(md)) std::cout << read_file(md.string());
    throw;
  }
  return 0;
}

int run_similarity(const Common& c, const std::string& data_dir) {
  const RunConfig cfg = resolve(c);
  if (c.dry_run) {
    print_dry_run("similarity", cfg, {{"data", data_dir.empty() ? "synthetic" : data_dir}});
    return 0;
  }
  const auto out = similarity_stage(cfg, data_dir, c.out_dir, info);
  std::cout << out.matrix.render() << "mean off-diagonal W1: " << format_double(out.mean_off_diagonal) << '\n';
  return 0;
}

int exit_code(ErrorClass k) {
  switch (k) {
    case ErrorClass::Usage: return 1;
    case ErrorClass::Data: return 2;
    case ErrorClass::Numeric: return 3;
  }
  return 3;
}

const char* class_name(ErrorClass k) {
  switch (k) {
    case ErrorClass::Usage: return "usage";
    case ErrorClass::Data: return "data";
    case ErrorClass::Numeric: return "numeric";
  }
  return "numeric";
}

void fail_line(const char* kind, const std::string& msg) {
  std::string one = msg;
  std::replace(one.begin(), one.end(), '\n', ' ');
  std::cerr << "metadse: error[" << kind << "]: " << one << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaDSE: meta-learned surrogate and workload-adaptive mask for CPU design-space exploration",
               "metadse"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Common common;
  std::uint64_t seed_value = 0;
  std::size_t threads_value = 0;
  std::map<std::string, std::string> raw_flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value configuration file");
    sub->add_option("--space", common.space_path, "design space file (default: canonical space)");
    sub->add_option("--seed", seed_value, "master seed");
    sub->add_option("--threads", threads_value, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", common.out_dir, "directory for output artifacts");
    sub->add_flag("--dry-run", common.dry_run, "print the resolved configuration and exit");
    sub->add_option("--set", common.sets, "override any configuration key (key=value)");
    const std::pair<const char*, const char*> stage_flags[] = {
        {"--epochs", "meta.epochs"},
        {"--tasks-per-workload", "meta.tasks_per_workload"},
        {"--val-tasks-per-workload", "meta.val_tasks_per_workload"},
        {"--inner-steps", "meta.inner_steps"},
        {"--inner-lr", "meta.inner_lr"},
        {"--outer-lr", "meta.outer_lr"},
        {"--support", "meta.support"},
        {"--query", "meta.query"},
        {"--adapt-steps", "adapt.steps"},
        {"--adapt-lr", "adapt.lr"},
        {"--eval-tasks", "eval.tasks"},
        {"--mask-k", "mask.k"},
        {"--mask-min-support", "mask.min_support"},
        {"--dissimilarity", "data.dissimilarity"},
        {"--noise", "data.noise"},
        {"--workload-count", "data.workloads"},
        {"--samples-per-workload", "data.samples_per_workload"},
    };
    for (const auto& [flag, key] : stage_flags)
      sub->add_option(flag, raw_flags[key], std::string("sets ") + key);
  };

  std::string data_dir, ckpt_path, mask_path, cand_path, out_file, workloads;
  bool identity_mask = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic workload family as CSV datasets plus manifest");
  add_common(gen);
  auto* pre = app.add_subcommand("pretrain", "meta-train the surrogate on the training workloads");
  add_common(pre);
  pre->add_option("--data", data_dir, "directory of workload CSVs")->required();
  auto* ext = app.add_subcommand("extract-mask", "build the workload-adaptive mask from attention candidates");
  add_common(ext);
  ext->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  ext->add_option("--candidates", cand_path, "attention candidates written by pretrain")->required();
  ext->add_option("--out", out_file, "output checkpoint with mask (default <out-dir>/metadse.mdse)");
  auto* ada = app.add_subcommand("adapt", "adapt the checkpoint to each target workload's support set");
  add_common(ada);
  ada->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  ada->add_option("--mask", mask_path, "file holding a mask (from extract-mask)");
  ada->add_option("--data", data_dir, "directory of workload CSVs")->required();
  ada->add_option("--workloads", workloads, "comma-separated workload ids (default: checkpoint test split)");
  auto* ev = app.add_subcommand("evaluate", "run the few-shot evaluation protocol");
  add_common(ev);
  ev->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  ev->add_option("--mask", mask_path, "file holding a mask (from extract-mask)");
  ev->add_option("--data", data_dir, "directory of workload CSVs")->required();
  ev->add_option("--workloads", workloads, "comma-separated workload ids (default: checkpoint test split)");
  auto* abl = app.add_subcommand("ablate", "three-arm ablation: with mask, without mask, scratch");
  add_common(abl);
  abl->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  abl->add_option("--mask", mask_path, "file holding a mask (from extract-mask)");
  abl->add_flag("--identity-mask", identity_mask, "use a frozen all-ones mask and check it matches the no-mask arm");
  abl->add_option("--data", data_dir, "directory of workload CSVs")->required();
  abl->add_option("--workloads", workloads, "comma-separated workload ids (default: checkpoint test split)");
  auto* sim = app.add_subcommand("similarity", "pairwise Wasserstein distances between workloads");
  add_common(sim);
  sim->add_option("--data", data_dir, "directory of workload CSVs (default: generate from the configuration)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string where = "metadse";
    for (const auto* s : app.get_subcommands()) where += " " + s->get_name();
    fail_line("usage", std::string(e.what()) + " (see '" + where + " --help')");
    return 1;
  }

  CLI::App* active = app.get_subcommands().front();
  if (active->count("--seed")) common.seed = seed_value;
  if (active->count("--threads")) common.threads = threads_value;
  for (const auto& [key, value] : raw_flags)
    if (!value.empty()) common.flag_overrides[key] = value;

  try {
    const std::string name = active->get_name();
    if (name == "gen-data") return run_gen_data(common);
    if (name == "pretrain") return run_pretrain(common, data_dir);
    if (name == "extract-mask") return run_extract_mask(common, ckpt_path, cand_path, out_file);
    if (name == "adapt") return run_adapt(common, ckpt_path, mask_path, data_dir, workloads);
    if (name == "evaluate") return run_evaluate(common, ckpt_path, mask_path, data_dir, workloads);
    if (name == "ablate") return run_ablate(common, ckpt_path, mask_path, data_dir, workloads, identity_mask);
    if (name == "similarity") return run_similarity(common, data_dir);
    fail_line("usage", "unknown subcommand '" + name + "'");
    return 1;
  } catch (const Error& e) {
    fail_line(class_name(e.error_class()), e.kind() + ": " + e.what());
    return exit_code(e.error_class());
  } catch (const fs::filesystem_error& e) {
    fail_line("data", e.what());
    return 2;
  } catch (const std::exception& e) {
    fail_line("numeric", std::string("internal: ") + e.what());
    return 3;
  }
}
