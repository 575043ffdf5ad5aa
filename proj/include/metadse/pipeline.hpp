#pragma once

// The pipeline stages behind the command-line tool. Stages exchange files
// only, so each one can be rerun on its own; every artifact carries the
// stage's config hash, seeds and configuration as provenance.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "metadse/checkpoint.hpp"
#include "metadse/evaluation.hpp"
#include "metadse/run_config.hpp"
#include "metadse/workload_oracle.hpp"

namespace metadse {

using StageLog = std::function<void(const std::string&)>;

// Stage-prefixed config hash, seeds and full configuration listing.
std::map<std::string, std::string> provenance(const std::string& stage, const RunConfig& cfg);
// Prepends `# key = value` lines.
std::string with_header(const std::map<std::string, std::string>& meta, const std::string& body);
std::string strip_header(const std::string& text);

struct DataDir {
  std::vector<WorkloadSource> sources;  // sorted by id
  std::string digest;                   // FNV-1a over the file contents in id order
};

// Every `*.csv` in `dir`. Throws IoError when there are none.
DataDir load_data_dir(const std::string& dir, const DesignSpace& space);
std::vector<WorkloadSource> select_workloads(const DataDir& data, const std::vector<std::string>& ids);
// A comma-separated list, else the test split recorded in the checkpoint.
std::vector<std::string> target_workloads(const std::string& list, const Checkpoint& ckpt);

// Bitwise comparison of two reports, task digests included.
bool same_results(const EvalReport& a, const EvalReport& b);

// Writes wNN.csv, manifest.txt and, for a custom space, space.txt.
void gen_data_stage(const RunConfig& cfg, const std::string& out_dir, const StageLog& log = {});

struct PretrainSummary {
  std::vector<std::string> train, val, test;
  std::size_t best_epoch = 0;
  double best_val = 0;
};
// Writes checkpoint.mdse, train_log.csv, candidates.txt and split.txt.
PretrainSummary pretrain_stage(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                               const StageLog& log = {});

// Writes the checkpoint plus mask to `target` and the mask alone as
// <target stem>.mask.csv. Returns the number of retained salient entries.
std::size_t extract_mask_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& candidates,
                               const std::string& target, const StageLog& log = {});

// A mask file is a checkpoint carrying a mask block; empty path means none.
std::optional<ArchMask> load_mask(const std::string& path);

// Writes adapted_<id>.mdse per workload and adapt.csv.
void adapt_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask,
                 const std::string& data_dir, const std::string& workloads, const std::string& out_dir,
                 const StageLog& log = {});

struct EvaluateOutcome {
  std::string arm;
  EvalReport report;
  std::string markdown;
};
// Writes eval.csv and eval.md.
EvaluateOutcome evaluate_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask,
                               const std::string& data_dir, const std::string& workloads, const std::string& out_dir,
                               const StageLog& log = {});

struct AblateOutcome {
  AblationResult result;
  std::string markdown;
  bool identity_checked = false;
  bool identity_ok = true;
};
// Three arms: with mask, without mask, scratch. With `identity_mask` the first
// arm uses a frozen all-ones mask and must match the second bitwise. Writes
// ablation.csv and ablation.md, then throws NumericError if the task streams
// or the identity check disagree.
AblateOutcome ablate_stage(const RunConfig& cfg, const std::string& checkpoint, const std::string& mask,
                           bool identity_mask, const std::string& data_dir, const std::string& workloads,
                           const std::string& out_dir, const StageLog& log = {});

struct SimilarityOutcome {
  SimilarityMatrix matrix;
  double mean_off_diagonal = 0;
};
// Over the CSVs in `data_dir`, or the configured synthetic family when empty.
// Writes similarity.csv.
SimilarityOutcome similarity_stage(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                                   const StageLog& log = {});

}  // namespace metadse
