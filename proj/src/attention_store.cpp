#include "metadse/attention_store.hpp"

#include <sstream>

#include "metadse/errors.hpp"
#include "metadse/text.hpp"

namespace metadse {

void MaskCandidateStore::add(const std::string& workload_id, const Matrix& head_average) {
  auto& e = entries_[workload_id];
  if (e.count == 0) {
    e.sum = head_average;
  } else {
    if (!e.sum.same_shape(head_average)) throw ShapeError("attention matrices disagree in size");
    for (std::size_t i = 0; i < e.sum.size(); ++i) e.sum.data()[i] += head_average.data()[i];
  }
  ++e.count;
}

void MaskCandidateStore::collect(const std::string& workload_id, const AttentionRecord& record) {
  if (record.layers == 0) throw ContractError("attention record has no layers");
  for (std::size_t s = 0; s < record.samples; ++s) add(workload_id, record.head_average(record.layers - 1, s));
}

void MaskCandidateStore::merge(const MaskCandidateStore& other) {
  for (const auto& [id, e] : other.entries_) {
    auto& mine = entries_[id];
    if (mine.count == 0) {
      mine = e;
      continue;
    }
    if (!mine.sum.same_shape(e.sum)) throw ShapeError("attention matrices disagree in size");
    for (std::size_t i = 0; i < e.sum.size(); ++i) mine.sum.data()[i] += e.sum.data()[i];
    mine.count += e.count;
  }
}

Matrix MaskCandidateStore::mean(const std::string& workload_id) const {
  auto it = entries_.find(workload_id);
  if (it == entries_.end() || it->second.count == 0)
    throw ContractError("no attention collected for workload '" + workload_id + "'");
  Matrix m = it->second.sum;
  const double n = static_cast<double>(it->second.count);
  for (double& x : m.data()) x /= n;
  return m;
}

std::string MaskCandidateStore::to_text() const {
  std::ostringstream os;
  os << "MDSE-CANDIDATES 1\n";
  for (const auto& [id, e] : entries_) {
    os << "workload " << id << ' ' << e.count << ' ' << e.sum.rows() << '\n';
    for (std::size_t i = 0; i < e.sum.rows(); ++i) {
      for (std::size_t j = 0; j < e.sum.cols(); ++j) os << (j ? " " : "") << format_double(e.sum(i, j));
      os << '\n';
    }
  }
  return os.str();
}

MaskCandidateStore MaskCandidateStore::from_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "MDSE-CANDIDATES" || version != "1")
    throw ParseError(origin + ": not a mask candidate file");
  MaskCandidateStore store;
  std::string tag;
  while (is >> tag) {
    std::string id;
    std::uint64_t count = 0;
    std::size_t p = 0;
    if (tag != "workload" || !(is >> id >> count >> p) || p == 0)
      throw ParseError(origin + ": malformed workload block");
    Entry e{Matrix(p, p), count};
    for (double& x : e.sum.data()) {
      std::string tok;
      if (!(is >> tok) || !parse_double(tok, x)) throw ParseError(origin + ": bad attention value in '" + id + "'");
    }
    store.entries_[id] = std::move(e);
  }
  return store;
}

}  // namespace metadse
