#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "metadse/dataset_io.hpp"
#include "metadse/errors.hpp"
#include "metadse/task_sampler.hpp"
#include "metadse/text.hpp"
#include "support.hpp"

using namespace metadse;

namespace {

WorkloadSource sample_source(std::size_t n, std::uint64_t seed = 1) {
  const DesignSpace space = canonical_space();
  return materialize(WorkloadSource::synthetic(gen_family(2, {}, seed)[0], space), n, seed);
}

// Replaces one cell of data row `row` (0-based, header excluded).
std::string edit_cell(const std::string& csv, std::size_t row, std::size_t col, const std::string& value) {
  auto lines = split(csv, '\n');
  auto cells = split(lines[row + 1], ',');
  cells[col] = value;
  std::string joined;
  for (std::size_t i = 0; i < cells.size(); ++i) joined += (i ? "," : "") + cells[i];
  lines[row + 1] = joined;
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

TEST_CASE("save and load round-trip byte for byte") {
  const DesignSpace space = canonical_space();
  const auto src = sample_source(120);
  const std::string text = format_dataset(src);
  const auto back = parse_dataset(text, space, "w00.csv");
  CHECK(back.id() == src.id());
  CHECK(back.rows().size() == 120);
  CHECK(format_dataset(back) == text);
  CHECK(format_dataset(parse_dataset(format_dataset(back), space, "x")) == text);
}

TEST_CASE("row order does not depend on insertion order") {
  const DesignSpace space = canonical_space();
  const auto src = sample_source(60);
  auto rows = src.rows();
  std::reverse(rows.begin(), rows.end());
  const auto permuted = WorkloadSource::dataset(src.id(), space, rows);
  CHECK(format_dataset(permuted) == format_dataset(src));
}

TEST_CASE("an empty source saves as a header-only file") {
  const DesignSpace space = canonical_space();
  const auto empty = WorkloadSource::dataset("w09", space, {});
  const std::string text = format_dataset(empty);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(text.rfind("workload,Core Frequency,Pipeline Width,", 0) == 0);
  CHECK(text.find(",ipc,power\n") != std::string::npos);
}

TEST_CASE("provenance comment lines are written and skipped") {
  const DesignSpace space = canonical_space();
  const auto src = sample_source(10);
  const std::string text = format_dataset(src, {{"gen-data.config_hash", "abc"}});
  CHECK(text.rfind("# gen-data.config_hash = abc\n", 0) == 0);
  CHECK(format_dataset(parse_dataset(text, space, "x")) == format_dataset(src));
}

TEST_CASE("malformed files raise the matching error") {
  const DesignSpace space = canonical_space();
  const std::string good = format_dataset(sample_source(5));
  const std::size_t width_col = 1 + space.find("Pipeline Width");
  SUBCASE("value outside the candidates names the column") {
    try {
      parse_dataset(edit_cell(good, 2, width_col, "13"), space, "f.csv");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("Pipeline Width") != std::string::npos);
      CHECK(std::string(e.what()).find("row 4") != std::string::npos);
    }
  }
  SUBCASE("no snapping to a nearby candidate") {
    CHECK_THROWS_AS(parse_dataset(edit_cell(good, 0, width_col, "4.0000001"), space, "f"), SchemaError);
  }
  SUBCASE("malformed number") {
    CHECK_THROWS_AS(parse_dataset(edit_cell(good, 0, width_col, "4x"), space, "f"), ParseError);
    CHECK_THROWS_AS(parse_dataset(edit_cell(good, 0, space.dims() + 1, "fast"), space, "f"), ParseError);
  }
  SUBCASE("unknown categorical label") {
    CHECK_THROWS_AS(parse_dataset(edit_cell(good, 0, 1 + space.find("Branch Predictor"), "TAGE"), space, "f"),
                    SchemaError);
  }
  SUBCASE("duplicate design point") {
    const auto lines = split(good, '\n');
    CHECK_THROWS_AS(parse_dataset(good + lines[1] + "\n", space, "f"), DuplicateError);
  }
  SUBCASE("wrong header") {
    std::string bad = good;
    bad.replace(bad.find("ROB Size"), 8, "ROB Entries");
    CHECK_THROWS_AS(parse_dataset(bad, space, "f"), SchemaError);
  }
  SUBCASE("mixed workload ids") { CHECK_THROWS_AS(parse_dataset(edit_cell(good, 3, 0, "w77"), space, "f"), SchemaError); }
  SUBCASE("non-positive label") {
    CHECK_THROWS_AS(parse_dataset(edit_cell(good, 0, space.dims() + 1, "0"), space, "f"), SchemaError);
  }
  SUBCASE("ragged row") { CHECK_THROWS_AS(parse_dataset(good + "w00,1,2\n", space, "f"), ParseError); }
  SUBCASE("empty file") { CHECK_THROWS_AS(parse_dataset("", space, "f"), ParseError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset("/nonexistent/w.csv", space), IoError); }
}

TEST_CASE("a 50-row dataset yields exactly one 5+45 task") {
  const DesignSpace space = canonical_space();
  const auto src = parse_dataset(format_dataset(sample_source(50)), space, "w00.csv");
  const Task t = make_task(src, 5, 45, 3);
  CHECK(t.support.size() == 5);
  CHECK(t.query.size() == 45);
  std::set<DesignPoint> pts;
  for (const auto& s : t.support) pts.insert(s.point);
  for (const auto& s : t.query) pts.insert(s.point);
  CHECK(pts.size() == 50);
  CHECK_THROWS_AS(make_task(src, 5, 46, 3), SourceExhausted);
}

TEST_CASE("manifest round trip reproduces the family bit for bit") {
  FamilyManifest m;
  m.seed = 77;
  m.dissimilarity = 0.6;
  m.noise = 0.02;
  m.samples_per_workload = 100;
  m.surfaces = gen_family(3, FamilyOptions{0.6, 0.02, 8}, 77);
  m.metadata = {{"gen-data.config_hash", "0011"}};
  const std::string text = format_manifest(m);
  const FamilyManifest back = parse_manifest(text, "manifest.txt");
  CHECK(back.surfaces == m.surfaces);
  CHECK(back.metadata == m.metadata);
  CHECK(format_manifest(back) == text);
  const DesignSpace space = canonical_space();
  for (const auto& p : space.sample_uniform(50, 4)) {
    CHECK(back.surfaces[1].evaluate(space, p, 9).ipc == m.surfaces[1].evaluate(space, p, 9).ipc);
    CHECK(back.surfaces[1].evaluate(space, p, 9).power == m.surfaces[1].evaluate(space, p, 9).power);
  }
}
