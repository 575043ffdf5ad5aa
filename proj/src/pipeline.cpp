#include "metadse/pipeline.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <filesystem>
#include <sstream>

#include "metadse/dataset_io.hpp"
#include "metadse/errors.hpp"
#include "metadse/meta_trainer.hpp"
#include "metadse/parallel.hpp"
#include "metadse/rng.hpp"
#include "metadse/task_sampler.hpp"
#include "metadse/text.hpp"
#include "metadse/wam.hpp"

namespace fs = std::filesystem;

namespace metadse {

namespace {

void note(const StageLog& log, const std::string& msg) {
  if (log) log(msg);
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// Wall time goes to the log only, never into artifacts.
std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  return format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

void check_space(const RunConfig& cfg, const Checkpoint& ckpt, const std::string& path) {
  if (cfg.space().dims() != ckpt.params) throw SchemaError(path + ": checkpoint does not match the design space");
}

}  // namespace

std::map<std::string, std::string> provenance(const std::string& stage, const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  m[stage + ".config_hash"] = cfg.hash();
  for (const auto& [k, v] : cfg.seeds()) m[stage + "." + k] = std::to_string(v);
  std::istringstream is(cfg.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) m[stage + ".config." + line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

std::string with_header(const std::map<std::string, std::string>& meta, const std::string& body) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + " = " + v + "\n";
  return out + body;
}

std::string strip_header(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) return {};
    pos = nl + 1;
  }
  return text.substr(pos);
}

DataDir load_data_dir(const std::string& dir, const DesignSpace& space) {
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .csv datasets in '" + dir + "'");
  DataDir d;
  std::string all;
  for (const auto& f : files) {
    const std::string text = read_file(f.string());
    d.sources.push_back(parse_dataset(text, space, f.string()));
    all += fnv1a_hex(text);
  }
  std::sort(d.sources.begin(), d.sources.end(), [](const auto& a, const auto& b) { return a.id() < b.id(); });
  for (std::size_t i = 1; i < d.sources.size(); ++i)
    if (d.sources[i].id() == d.sources[i - 1].id())
      throw DuplicateError("workload '" + d.sources[i].id() + "' appears in two files under '" + dir + "'");
  d.digest = fnv1a_hex(all);
  return d;
}

std::vector<WorkloadSource> select_workloads(const DataDir& data, const std::vector<std::string>& ids) {
  std::vector<WorkloadSource> out;
  for (const auto& id : ids) {
    auto it = std::find_if(data.sources.begin(), data.sources.end(), [&](const auto& s) { return s.id() == id; });
    if (it == data.sources.end()) throw SchemaError("workload '" + id + "' is not in the data directory");
    out.push_back(*it);
  }
  return out;
}

std::vector<std::string> target_workloads(const std::string& list, const Checkpoint& ckpt) {
  if (!list.empty()) {
    std::vector<std::string> ids;
    for (const auto& w : split(list, ',')) ids.push_back(trim(w));
    return ids;
  }
  auto it = ckpt.metadata.find("split.test");
  if (it == ckpt.metadata.end()) throw ConfigError("checkpoint records no test split; name the workloads explicitly");
  return words(it->second);
}

bool same_results(const EvalReport& a, const EvalReport& b) {
  if (a.workloads.size() != b.workloads.size()) return false;
  auto same = [](const MeanCi& x, const MeanCi& y) {
    return x.n == y.n && std::bit_cast<std::uint64_t>(x.mean) == std::bit_cast<std::uint64_t>(y.mean) &&
           std::bit_cast<std::uint64_t>(x.half_width) == std::bit_cast<std::uint64_t>(y.half_width);
  };
  for (std::size_t w = 0; w < a.workloads.size(); ++w) {
    const auto& x = a.workloads[w];
    const auto& y = b.workloads[w];
    if (x.task_digest != y.task_digest || x.failed != y.failed || x.outputs.size() != y.outputs.size()) return false;
    for (const auto& [out, m] : x.outputs) {
      auto it = y.outputs.find(out);
      if (it == y.outputs.end() || !same(m.rmse, it->second.rmse) || !same(m.mape, it->second.mape) ||
          !same(m.ev, it->second.ev))
        return false;
    }
  }
  return true;
}

void gen_data_stage(const RunConfig& cfg, const std::string& out_dir, const StageLog& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const DesignSpace space = cfg.space();
  const auto seeds = cfg.seeds();
  const auto surfaces = gen_family(cfg.workloads, cfg.family, seeds.at("seed.family"));
  const auto prov = provenance("gen-data", cfg);
  std::vector<std::string> bodies(surfaces.size());
  parallel_for(surfaces.size(), cfg.threads, [&](std::size_t i) {
    const auto src = WorkloadSource::synthetic(surfaces[i], space);
    const auto ds = materialize(src, cfg.samples_per_workload, derive_seed(seeds.at("seed.materialize"), {i}));
    bodies[i] = format_dataset(ds, prov);
  });
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < surfaces.size(); ++i) write_file(in_dir(out_dir, surfaces[i].id + ".csv"), bodies[i]);

  FamilyManifest m;
  m.seed = seeds.at("seed.family");
  m.dissimilarity = cfg.family.dissimilarity;
  m.noise = cfg.family.noise;
  m.samples_per_workload = cfg.samples_per_workload;
  m.surfaces = surfaces;
  m.metadata = prov;
  save_manifest(m, in_dir(out_dir, "manifest.txt"));
  if (!cfg.space_text.empty()) write_file(in_dir(out_dir, "space.txt"), cfg.space_text);
  note(log, "gen-data: " + std::to_string(surfaces.size()) + " workloads x " +
                std::to_string(cfg.samples_per_workload) + " samples in " + seconds_since(t0) + " s");
}

PretrainSummary pretrain_stage(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                               const StageLog& log) {
  const DesignSpace space = cfg.space();
  const DataDir data = load_data_dir(data_dir, space);
  const auto seeds = cfg.seeds();
  std::vector<std::string> ids;
  for (const auto& s : data.sources) ids.push_back(s.id());
  const auto split = split_workloads(ids, seeds.at("seed.split"), {cfg.split_train, cfg.split_val, cfg.split_test});
  const auto train = select_workloads(data, split.train);
  const auto val = select_workloads(data, split.val);
  const auto scaler = TargetScaler::fit(cfg.model.outputs, train, seeds.at("seed.scaler"));
  const Surrogate model(cfg.model, space.dims());
  note(log, "pretrain: train {" + join(split.train, " ") + "}, val {" + join(split.val, " ") + "}, test {" +
                join(split.test, " ") + "}, " + std::to_string(model.layout().total()) + " parameters");

  std::ostringstream train_log;
  train_log << "epoch,train_loss,val_loss,improved\n";
  const auto result = pretrain(model, train, val, scaler, cfg.meta, seeds.at("seed.pretrain"), cfg.threads,
                               [&](const EpochStats& st, const ParamVector&) {
                                 train_log << st.epoch << ',' << format_double(st.train_loss) << ','
                                           << format_double(st.val_loss) << ',' << (st.improved ? 1 : 0) << '\n';
                                 note(log, "epoch " + std::to_string(st.epoch) + ": train " +
                                               format_double(st.train_loss) + ", val " + format_double(st.val_loss) +
                                               ", " + format_double(st.seconds) + " s");
                               });

  auto meta = provenance("pretrain", cfg);
  meta["data.digest"] = data.digest;
  meta["split.train"] = join(split.train, " ");
  meta["split.val"] = join(split.val, " ");
  meta["split.test"] = join(split.test, " ");
  meta["pretrain.best_epoch"] = std::to_string(result.best_epoch);
  meta["pretrain.best_val_loss"] = format_double(result.best_val);

  Checkpoint ckpt;
  ckpt.config = cfg.model;
  ckpt.params = space.dims();
  ckpt.scaler = scaler;
  ckpt.theta = result.best_theta;
  ckpt.metadata = meta;

  ensure_dir(out_dir);
  save_checkpoint(in_dir(out_dir, "checkpoint.mdse"), ckpt);
  write_file(in_dir(out_dir, "train_log.csv"), with_header(meta, train_log.str()));
  write_file(in_dir(out_dir, "candidates.txt"), with_header(meta, result.candidates.to_text()));
  write_file(in_dir(out_dir, "split.txt"), with_header(meta, "train = " + meta["split.train"] + "\nval = " +
                                                                 meta["split.val"] + "\ntest = " +
                                                                 meta["split.test"] + "\n"));
  note(log, "pretrain: best epoch " + std::to_string(result.best_epoch) + " (val loss " +
                format_double(result.best_val) + ")");
  return {split.train, split.val, split.test, result.best_epoch, result.best_val};
}

std::size_t extract_mask_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& candidates,
                               const std::string& target, const StageLog& log) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto store = MaskCandidateStore::from_text(strip_header(read_file(candidates)), candidates);
  if (!store.empty() && store.entries().begin()->second.sum.rows() != ckpt.params)
    throw SchemaError(candidates + ": candidate matrices do not match the checkpoint's design space");
  const auto kept = retained_entries(store, cfg.mask);
  ckpt.mask = build_mask(store, cfg.mask);
  for (const auto& [k, v] : provenance("extract-mask", cfg)) ckpt.metadata[k] = v;
  ckpt.metadata["extract-mask.retained"] = std::to_string(kept.size());
  ensure_dir(fs::path(target).parent_path().string());
  save_checkpoint(target, ckpt);

  std::ostringstream os;
  for (std::size_t i = 0; i < ckpt.params; ++i) {
    for (std::size_t j = 0; j < ckpt.params; ++j) os << (j ? "," : "") << format_double(ckpt.mask->m(i, j));
    os << '\n';
  }
  write_file(fs::path(target).replace_extension(".mask.csv").string(), with_header(ckpt.metadata, os.str()));
  note(log, "extract-mask: " + std::to_string(kept.size()) + " salient entries from " +
                std::to_string(store.workloads()) + " workloads");
  return kept.size();
}

std::optional<ArchMask> load_mask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const Checkpoint m = load_checkpoint(path);
  if (!m.mask) throw SchemaError(path + ": file holds no mask");
  ArchMask mask = *m.mask;
  mask.learnable = true;
  return mask;
}

void adapt_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask_path,
                 const std::string& data_dir, const std::string& workloads, const std::string& out_dir,
                 const StageLog& log) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto mask = load_mask(mask_path);
  check_space(cfg, ckpt, checkpoint);
  const DataDir data = load_data_dir(data_dir, cfg.space());
  const auto sources = select_workloads(data, target_workloads(workloads, ckpt));
  const Surrogate model = ckpt.model();
  const std::uint64_t seed = derive_seed(cfg.seeds().at("seed.eval"), {hash_tag("adapt")});

  std::vector<Checkpoint> adapted(sources.size());
  std::vector<std::array<double, 2>> losses(sources.size());
  parallel_for(sources.size(), cfg.threads, [&](std::size_t w) {
    const auto support = sources[w].draw(cfg.meta.support, derive_seed(seed, {hash_tag(sources[w].id())}));
    const Batch batch = make_batch(support, ckpt.scaler);
    const AdaptOptions opt{cfg.adapt_steps, LrSchedule::cosine(cfg.adapt_lr, cfg.adapt_steps), mask.has_value()};
    const Adapted a = adapt(model, ckpt.theta, batch, opt, mask ? &*mask : nullptr);
    losses[w] = {model.loss(ckpt.theta, batch, mask ? &*mask : nullptr),
                 model.loss(a.theta, batch, a.mask ? &*a.mask : nullptr)};
    Checkpoint out = ckpt;
    out.theta = a.theta;
    out.mask = a.mask;
    if (out.mask) out.mask->learnable = false;
    adapted[w] = std::move(out);
  });

  ensure_dir(out_dir);
  const auto prov = provenance("adapt", cfg);
  std::ostringstream summary;
  summary << "workload,support_loss_before,support_loss_after\n";
  for (std::size_t w = 0; w < sources.size(); ++w) {
    for (const auto& [k, v] : prov) adapted[w].metadata[k] = v;
    adapted[w].metadata["adapt.workload"] = sources[w].id();
    save_checkpoint(in_dir(out_dir, "adapted_" + sources[w].id() + ".mdse"), adapted[w]);
    summary << sources[w].id() << ',' << format_double(losses[w][0]) << ',' << format_double(losses[w][1]) << '\n';
  }
  write_file(in_dir(out_dir, "adapt.csv"), with_header(prov, summary.str()));
  note(log, "adapt: " + std::to_string(sources.size()) + " adapted checkpoints written");
}

EvaluateOutcome evaluate_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask_path,
                               const std::string& data_dir, const std::string& workloads, const std::string& out_dir,
                               const StageLog& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto mask = load_mask(mask_path);
  check_space(cfg, ckpt, checkpoint);
  const DataDir data = load_data_dir(data_dir, cfg.space());
  const auto sources = select_workloads(data, target_workloads(workloads, ckpt));
  const Surrogate model = ckpt.model();
  const Arm arm{mask ? "metadse" : "metadse-no-wam", &ckpt.theta, mask ? &*mask : nullptr, true};
  EvaluateOutcome out;
  out.arm = arm.name;
  out.report = run_protocol(model, ckpt.scaler, arm, sources, cfg.protocol(cfg.seeds().at("seed.eval")), cfg.threads);
  for (const auto& [k, v] : provenance("evaluate", cfg)) out.report.metadata[k] = v;
  for (const auto& [k, v] : ckpt.metadata)
    if (k.ends_with("config_hash")) out.report.metadata["checkpoint." + k] = v;
  out.report.metadata["data.digest"] = data.digest;
  out.markdown = out.report.to_markdown("Evaluation: " + arm.name);

  ensure_dir(out_dir);
  write_file(in_dir(out_dir, "eval.csv"), out.report.to_csv(arm.name));
  write_file(in_dir(out_dir, "eval.md"), out.markdown);
  note(log, "evaluate: " + std::to_string(sources.size()) + " workloads in " + seconds_since(t0) + " s, " +
                std::to_string(out.report.failed()) + " failed tasks");
  return out;
}

AblateOutcome ablate_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask_path,
                           bool identity_mask, const std::string& data_dir, const std::string& workloads,
                           const std::string& out_dir, const StageLog& log) {
  if (mask_path.empty() == !identity_mask)
    throw ConfigError("ablation needs exactly one of a mask file or the identity mask");
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  check_space(cfg, ckpt, checkpoint);
  // The identity check freezes an all-ones mask, which must reproduce the no-mask arm exactly.
  const ArchMask mask = identity_mask ? ArchMask::ones(ckpt.params) : *load_mask(mask_path);
  const DataDir data = load_data_dir(data_dir, cfg.space());
  const auto sources = select_workloads(data, target_workloads(workloads, ckpt));
  const Surrogate model = ckpt.model();
  const auto seeds = cfg.seeds();
  const ParamVector scratch = model.init_params(seeds.at("seed.scratch"));
  const std::vector<Arm> arms = {
      {identity_mask ? "metadse-identity-mask" : "metadse", &ckpt.theta, &mask, !identity_mask},
      {"metadse-no-wam", &ckpt.theta, nullptr, true},
      {"scratch", &scratch, nullptr, true},
  };
  AblateOutcome out;
  out.result = ablation(model, ckpt.scaler, arms, sources, cfg.protocol(seeds.at("seed.eval")), cfg.threads);
  const auto prov = provenance("ablate", cfg);
  for (auto& r : out.result.reports) {
    for (const auto& [k, v] : prov) r.metadata[k] = v;
    r.metadata["data.digest"] = data.digest;
  }
  out.markdown = out.result.to_markdown();
  if (identity_mask) {
    out.identity_checked = true;
    out.identity_ok = same_results(out.result.reports[0], out.result.reports[1]);
    out.markdown += std::string("Arm identity (all-ones frozen mask vs. no mask): ") +
                    (out.identity_ok ? "identical" : "DIFFERENT") + "\n";
  }
  ensure_dir(out_dir);
  write_file(in_dir(out_dir, "ablation.csv"), out.result.to_csv());
  write_file(in_dir(out_dir, "ablation.md"), out.markdown);
  note(log, "ablate: 3 arms in " + seconds_since(t0) + " s");
  if (!out.result.identical_task_streams()) throw NumericError("ablation arms saw different task streams");
  if (!out.identity_ok) throw NumericError("arm identity check failed: frozen all-ones mask differs from no mask");
  return out;
}

SimilarityOutcome similarity_stage(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                                   const StageLog& log) {
  const DesignSpace space = cfg.space();
  const auto seeds = cfg.seeds();
  std::vector<WorkloadSource> sources;
  auto prov = provenance("similarity", cfg);
  if (data_dir.empty()) {
    for (auto& s : gen_family(cfg.workloads, cfg.family, seeds.at("seed.family")))
      sources.push_back(WorkloadSource::synthetic(std::move(s), space));
  } else {
    DataDir data = load_data_dir(data_dir, space);
    sources = std::move(data.sources);
    prov["data.digest"] = data.digest;
  }
  SimilarityOutcome out{similarity_matrix(sources, cfg.similarity_probe, seeds.at("seed.similarity")), 0.0};
  out.mean_off_diagonal = mean_off_diagonal(out.matrix.distance);
  prov["similarity.mean_off_diagonal"] = format_double(out.mean_off_diagonal);
  ensure_dir(out_dir);
  write_file(in_dir(out_dir, "similarity.csv"), with_header(prov, out.matrix.to_csv()));
  note(log, "similarity: " + std::to_string(sources.size()) + " workloads");
  return out;
}

}  // namespace metadse
