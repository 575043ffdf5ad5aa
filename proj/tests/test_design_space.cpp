#include <doctest.h>

#include <set>
#include <sstream>

#include "metadse/design_space.hpp"
#include "metadse/errors.hpp"
#include "metadse/text.hpp"
#include "support.hpp"

using namespace metadse;

namespace {

// The canonical parameter table: "a:b:s" is an inclusive stride range, "x/y/z" lists values.
struct Row {
  const char* name;
  const char* cell;
};
const Row kTable[] = {
    {"Core Frequency", "1/1.5/2/2.5/3"}, {"Pipeline Width", "1:12:1"},  {"Fetch Buffer", "16/32/64"},
    {"Fetch Queue", "8:48:4"},           {"Branch Predictor", "BiModeBP/TournamentBP"},
    {"RAS Size", "16:40:2"},             {"BTB Size", "1024/2048/4096"}, {"ROB Size", "32:256:16"},
    {"Int/Fp RF Number", "64:256:8"},    {"Inst Queue", "16:80:8"},      {"Load/Store Queue", "20:48:4"},
    {"IntALU", "3:8:1"},                 {"IntMultDiv", "1:4:1"},        {"FpALU", "1:4:1"},
    {"FpMultDiv", "1:4:1"},              {"Cacheline", "32/64"},         {"L1 Cache Size", "16/32/64"},
    {"L1 Cache Assoc.", "2/4"},          {"L2 Cache Size", "128/256"},   {"L2 Cache Assoc.", "2/4"},
};

// Independent expansion by integer counting; returns the labels as written.
std::vector<std::string> expand(const std::string& cell) {
  std::vector<std::string> out;
  if (cell.find(':') != std::string::npos) {
    int a = 0, b = 0, s = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(cell);
    is >> a >> c1 >> b >> c2 >> s;
    for (int v = a; v <= b; v += s) out.push_back(std::to_string(v));
  } else {
    std::string item;
    std::istringstream is(cell);
    while (std::getline(is, item, '/')) out.push_back(item);
  }
  return out;
}

}  // namespace

TEST_CASE("canonical space matches an independent expansion of every table row") {
  const DesignSpace space = canonical_space();
  REQUIRE(space.dims() == std::size(kTable));
  std::uint64_t product = 1;
  for (std::size_t i = 0; i < space.dims(); ++i) {
    CAPTURE(kTable[i].name);
    const auto want = expand(kTable[i].cell);
    const auto& p = space.param(i);
    CHECK(p.name == kTable[i].name);
    REQUIRE(p.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(p.format_candidate(k) == want[k]);
    product *= want.size();
  }
  CHECK(space.param(space.find("ROB Size")).size() == 15);
  CHECK(space.param(space.find("RAS Size")).size() == 13);
  CHECK(space.cardinality() == product);
  CHECK(space.cardinality() == 76859228160000ULL);
}

TEST_CASE("encode and decode round-trip on 1e5 random points") {
  const DesignSpace space = canonical_space();
  const auto points = space.sample_uniform(100000, 17);
  std::size_t mismatches = 0, out_of_unit = 0;
  for (const auto& p : points) {
    const auto f = space.encode(p);
    for (double x : f) out_of_unit += !(x >= 0.0 && x <= 1.0);
    if (!(space.decode(f) == p)) ++mismatches;
  }
  CHECK(mismatches == 0);
  CHECK(out_of_unit == 0);
}

TEST_CASE("encoding is min-max scaling of the value") {
  const DesignSpace space = canonical_space();
  DesignPoint p{std::vector<std::uint32_t>(space.dims(), 0)};
  const std::size_t rob = space.find("ROB Size");
  p.indices[rob] = 1;  // 48 in 32..256
  CHECK(space.encode(p)[rob] == doctest::Approx((48.0 - 32.0) / (256.0 - 32.0)));
  const std::size_t bp = space.find("Branch Predictor");
  p.indices[bp] = 1;
  CHECK(space.encode(p)[bp] == 1.0);
  CHECK(space.value(p, rob) == 48.0);
}

TEST_CASE("decode snaps to the nearest candidate, ties to the lower one") {
  const DesignSpace space({ParamSpec::enumerated("a", {0, 10, 20})});
  CHECK(space.decode({0.26}).indices[0] == 1);
  CHECK(space.decode({0.24}).indices[0] == 0);
  CHECK(space.decode({0.25}).indices[0] == 0);
  CHECK(space.decode({1.7}).indices[0] == 2);
  CHECK_THROWS_AS(space.decode({0.1, 0.2}), InvalidVector);
  CHECK_THROWS_AS(space.decode({std::nan("")}), InvalidVector);
}

TEST_CASE("invalid points are rejected") {
  const DesignSpace space = canonical_space();
  DesignPoint p{std::vector<std::uint32_t>(space.dims(), 0)};
  CHECK(space.valid(p));
  p.indices[space.find("ROB Size")] = 15;
  CHECK_FALSE(space.valid(p));
  CHECK_THROWS_AS(space.validate(p), InvalidPoint);
  CHECK_THROWS_AS(space.encode(DesignPoint{{0, 0}}), InvalidPoint);
}

TEST_CASE("uniform sampling is deterministic and covers every candidate") {
  const DesignSpace space = canonical_space();
  CHECK(space.sample_uniform(50, 3) == space.sample_uniform(50, 3));
  CHECK_FALSE(space.sample_uniform(50, 3) == space.sample_uniform(50, 4));
  const auto pts = space.sample_uniform(5000, 8);
  const std::size_t rob = space.find("ROB Size");
  std::set<std::uint32_t> seen;
  for (const auto& p : pts) seen.insert(p.indices[rob]);
  CHECK(seen.size() == 15);
}

TEST_CASE("text form round-trips and reports malformed lines") {
  const DesignSpace space = canonical_space();
  CHECK(DesignSpace::from_text(space.to_text()) == space);
  CHECK_THROWS_AS(DesignSpace::from_text("Width range 1:4:1\n"), ParseError);
  CHECK_THROWS_AS(DesignSpace::from_text("Width = range: 1:4\n"), ParseError);
  CHECK_THROWS_AS(DesignSpace::from_text("Width = fancy: 1\n"), ParseError);
  CHECK_THROWS_AS(DesignSpace::from_text("Width = enumerated: 1, x\n"), ParseError);
  const DesignSpace custom = DesignSpace::from_text("# small\nA = range: 2:8:2\nB = categorical: x, y, z\n");
  CHECK(custom.cardinality() == 12);
  CHECK(custom.param(1).index_of_label("y") == 1);
}
