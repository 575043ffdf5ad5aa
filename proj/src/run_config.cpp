#include "metadse/run_config.hpp"

#include <functional>
#include <sstream>
#include <vector>

#include "metadse/errors.hpp"
#include "metadse/rng.hpp"
#include "metadse/text.hpp"

namespace metadse {

namespace {

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::size_t to_size(const std::string& key, const std::string& v) {
  unsigned long long out = 0;
  if (!parse_u64(trim(v), out)) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0;
  if (!parse_double(trim(v), out)) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

#define SIZE_FIELD(name, member)                                                                  \
  Field {                                                                                         \
    name, [](RunConfig& c, const std::string& v) { c.member = to_size(name, v); },                \
        [](const RunConfig& c) { return std::to_string(c.member); }                               \
  }
#define REAL_FIELD(name, member)                                                                  \
  Field {                                                                                         \
    name, [](RunConfig& c, const std::string& v) { c.member = to_real(name, v); },                \
        [](const RunConfig& c) { return format_double(c.member); }                                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SIZE_FIELD("seed", seed),
      SIZE_FIELD("model.embed_dim", model.embed_dim),
      SIZE_FIELD("model.heads", model.heads),
      SIZE_FIELD("model.layers", model.layers),
      SIZE_FIELD("model.mlp_hidden", model.mlp_hidden),
      Field{"model.outputs",
            [](RunConfig& c, const std::string& v) {
              try {
                c.model.outputs = parse_output_kind(trim(v));
              } catch (const Error& e) {
                throw ConfigError(std::string("'model.outputs': ") + e.what());
              }
            },
            [](const RunConfig& c) { return to_string(c.model.outputs); }},
      SIZE_FIELD("meta.epochs", meta.epochs),
      SIZE_FIELD("meta.tasks_per_workload", meta.tasks_per_workload),
      SIZE_FIELD("meta.val_tasks_per_workload", meta.val_tasks_per_workload),
      SIZE_FIELD("meta.inner_steps", meta.inner_steps),
      REAL_FIELD("meta.inner_lr", meta.inner_lr),
      REAL_FIELD("meta.outer_lr", meta.outer_lr),
      SIZE_FIELD("meta.batch", meta.meta_batch),
      SIZE_FIELD("meta.support", meta.support),
      SIZE_FIELD("meta.query", meta.query),
      REAL_FIELD("meta.clip_norm", meta.clip_norm),
      SIZE_FIELD("data.workloads", workloads),
      REAL_FIELD("data.dissimilarity", family.dissimilarity),
      REAL_FIELD("data.noise", family.noise),
      SIZE_FIELD("data.interactions", family.interactions),
      SIZE_FIELD("data.samples_per_workload", samples_per_workload),
      SIZE_FIELD("split.train", split_train),
      SIZE_FIELD("split.val", split_val),
      SIZE_FIELD("split.test", split_test),
      SIZE_FIELD("adapt.steps", adapt_steps),
      REAL_FIELD("adapt.lr", adapt_lr),
      SIZE_FIELD("eval.tasks", eval_tasks),
      REAL_FIELD("mask.k", mask.keep_fraction),
      REAL_FIELD("mask.min_support", mask.min_support),
      REAL_FIELD("mask.floor", mask.floor),
      SIZE_FIELD("similarity.probe", similarity_probe),
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "threads") {
    threads = to_size(key, value);
    return;
  }
  // Listed by to_text() so a printed configuration loads back; the space
  // itself comes from --space, so only a matching record is accepted.
  if (key == "space") {
    const std::string current = space_text.empty() ? "canonical" : fnv1a_hex(space_text);
    if (value != current)
      throw ConfigError("space '" + value + "' does not match the selected space '" + current +
                        "'; choose the space with --space");
    return;
  }
  for (const auto& f : fields())
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  meta.validate();
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (split_train == 0 || split_val == 0 || split_test == 0) throw ConfigError("every split needs a workload");
  if (split_train + split_val + split_test > workloads)
    throw ConfigError("split sizes exceed the " + std::to_string(workloads) + " generated workloads");
  if (!(family.dissimilarity >= 0 && family.dissimilarity <= 1)) throw ConfigError("dissimilarity must lie in [0, 1]");
  if (!(family.noise >= 0)) throw ConfigError("noise must be non-negative");
  if (samples_per_workload < meta.support + meta.query)
    throw ConfigError("samples per workload must cover one support plus query set");
  if (adapt_steps == 0 || eval_tasks == 0) throw ConfigError("adaptation steps and evaluation tasks must be positive");
  if (!(adapt_lr >= 0)) throw ConfigError("adaptation rate must be non-negative");
  if (!(mask.keep_fraction > 0 && mask.keep_fraction <= 1)) throw ConfigError("mask.k must lie in (0, 1]");
  if (!(mask.min_support >= 0 && mask.min_support <= 1)) throw ConfigError("mask.min_support must lie in [0, 1]");
  if (!(mask.floor > 0 && mask.floor <= 1)) throw ConfigError("mask.floor must lie in (0, 1]");
}

std::string RunConfig::to_text() const {
  std::map<std::string, std::string> sorted;
  for (const auto& f : fields()) sorted[f.key] = f.get(*this);
  sorted["space"] = space_text.empty() ? "canonical" : fnv1a_hex(space_text);
  std::ostringstream os;
  for (const auto& [k, v] : sorted) os << k << " = " << v << '\n';
  return os.str();
}

std::string RunConfig::hash() const { return fnv1a_hex(to_text() + '\n' + space_text); }

DesignSpace RunConfig::space() const {
  return space_text.empty() ? canonical_space() : DesignSpace::from_text(space_text);
}

ProtocolConfig RunConfig::protocol(std::uint64_t eval_seed) const {
  ProtocolConfig p;
  p.tasks = eval_tasks;
  p.support = meta.support;
  p.query = meta.query;
  p.steps = adapt_steps;
  p.lr = adapt_lr;
  p.seed = eval_seed;
  return p;
}

std::map<std::string, std::uint64_t> RunConfig::seeds() const {
  return {
      {"seed", seed},
      {"seed.family", derive_seed(seed, {hash_tag("family")})},
      {"seed.materialize", derive_seed(seed, {hash_tag("materialize")})},
      {"seed.split", derive_seed(seed, {hash_tag("split")})},
      {"seed.scaler", derive_seed(seed, {hash_tag("scaler")})},
      {"seed.pretrain", derive_seed(seed, {hash_tag("pretrain")})},
      {"seed.scratch", derive_seed(seed, {hash_tag("scratch")})},
      {"seed.eval", derive_seed(seed, {hash_tag("eval")})},
      {"seed.similarity", derive_seed(seed, {hash_tag("similarity")})},
  };
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    c.apply(parse_key_values(text, path));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace metadse
