#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "metadse/matrix.hpp"
#include "metadse/surrogate.hpp"

namespace metadse {

// Per-workload running mean of head-averaged last-layer attention (the mask
// candidates). Stored as sums plus counts so merges are exact and ordered.
class MaskCandidateStore {
 public:
  struct Entry {
    Matrix sum;
    std::uint64_t count = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  // Adds the last layer of `record`, averaged over heads, once per sample.
  void collect(const std::string& workload_id, const AttentionRecord& record);
  void add(const std::string& workload_id, const Matrix& head_average);
  // Appends another store's sums; callers merge in a fixed order.
  void merge(const MaskCandidateStore& other);

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t workloads() const noexcept { return entries_.size(); }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  Matrix mean(const std::string& workload_id) const;

  std::string to_text() const;
  static MaskCandidateStore from_text(const std::string& text, const std::string& origin);

  friend bool operator==(const MaskCandidateStore&, const MaskCandidateStore&) = default;

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace metadse
