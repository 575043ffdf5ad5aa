#include <doctest.h>

#include <algorithm>

#include "metadse/attention_store.hpp"
#include "metadse/errors.hpp"
#include "metadse/wam.hpp"
#include "support.hpp"

using namespace metadse;
using namespace metadse::test;

namespace {

Matrix row_stochastic(std::size_t p, Rng& rng) {
  Matrix m = random_matrix(p, p, rng, 0.01, 1.0);
  for (std::size_t i = 0; i < p; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < p; ++j) s += m(i, j);
    for (std::size_t j = 0; j < p; ++j) m(i, j) /= s;
  }
  return m;
}

// Each row puts most weight on column hot(i); the rest is spread evenly.
Matrix peaked(std::size_t p, const std::vector<std::size_t>& hot) {
  Matrix m(p, p, 0.1 / static_cast<double>(p - 1));
  for (std::size_t i = 0; i < p; ++i) m(i, hot[i]) = 0.9;
  return m;
}

PredictorConfig tiny() {
  PredictorConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.mlp_hidden = 8;
  return c;
}

}  // namespace

TEST_CASE("candidate store averages head-averaged last-layer attention") {
  Rng rng(1);
  AttentionRecord rec{2, 1, 2, 4, {}};
  for (int i = 0; i < 4; ++i) rec.weights.push_back(row_stochastic(4, rng));
  const Matrix expect = rec.head_average(1, 0);
  for (std::size_t k = 0; k < expect.size(); ++k)
    CHECK(expect.data()[k] == doctest::Approx((rec.at(1, 0, 0).data()[k] + rec.at(1, 0, 1).data()[k]) / 2));

  MaskCandidateStore store;
  store.collect("w00", rec);
  CHECK(store.mean("w00") == expect);
  store.collect("w00", rec);
  for (std::size_t k = 0; k < expect.size(); ++k) CHECK(store.mean("w00").data()[k] == doctest::Approx(expect.data()[k]));
  CHECK_THROWS(store.mean("w01"));
}

TEST_CASE("means stay row-stochastic after 1000 collections") {
  Rng rng(2);
  MaskCandidateStore store;
  for (int i = 0; i < 1000; ++i) store.add("w00", row_stochastic(5, rng));
  const Matrix m = store.mean("w00");
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += m(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("candidate store text round trip and merge") {
  Rng rng(3);
  MaskCandidateStore a, b;
  a.add("w00", row_stochastic(3, rng));
  b.add("w00", row_stochastic(3, rng));
  b.add("w01", row_stochastic(3, rng));
  MaskCandidateStore merged = a;
  merged.merge(b);
  CHECK(merged.workloads() == 2);
  CHECK(merged.entries().at("w00").count == 2);
  CHECK(MaskCandidateStore::from_text(merged.to_text(), "mem") == merged);
  CHECK_THROWS_AS(MaskCandidateStore::from_text("garbage", "mem"), ParseError);
}

TEST_CASE("mask construction") {
  constexpr std::size_t p = 4;
  SUBCASE("empty store") { CHECK_THROWS_AS(build_mask(MaskCandidateStore{}), ContractError); }
  SUBCASE("k = 1 keeps everything") {
    Rng rng(4);
    MaskCandidateStore store;
    store.add("w00", row_stochastic(p, rng));
    const ArchMask m = build_mask(store, MaskOptions{1.0, 0.5, 0.05});
    CHECK(m == ArchMask::ones(p));
    CHECK_FALSE(m.learnable);
  }
  SUBCASE("identical workloads retain their shared top-k set") {
    const Matrix att = peaked(p, {2, 0, 3, 1});
    MaskCandidateStore store;
    store.add("w00", att);
    store.add("w01", att);
    const auto kept = retained_entries(store, MaskOptions{0.25, 0.5, 0.05});
    CHECK(kept == std::set<std::pair<std::size_t, std::size_t>>{{0, 2}, {1, 0}, {2, 3}, {3, 1}});
  }
  SUBCASE("a dominant pair is kept, a pair salient in one of four workloads is floored") {
    MaskCandidateStore store;
    store.add("w00", peaked(p, {2, 3, 0, 0}));  // (1,3) salient here only
    store.add("w01", peaked(p, {2, 0, 0, 0}));
    store.add("w02", peaked(p, {2, 0, 0, 0}));
    store.add("w03", peaked(p, {2, 2, 0, 0}));
    const ArchMask m = build_mask(store, MaskOptions{0.25, 0.5, 0.05});
    CHECK(m.m(0, 2) == 1.0);
    CHECK(m.m(1, 0) == 1.0);
    CHECK(m.m(1, 3) == 0.05);
    CHECK(m.m(1, 2) == 0.05);
    for (std::size_t i = 0; i < p; ++i) CHECK(m.m(i, i) == 1.0);
  }
  SUBCASE("raising the support threshold only removes entries") {
    Rng rng(6);
    MaskCandidateStore store;
    for (int w = 0; w < 6; ++w) store.add(workload_name(w), row_stochastic(6, rng));
    std::set<std::pair<std::size_t, std::size_t>> prev;
    bool first = true;
    for (double f : {0.0, 0.2, 0.4, 0.5, 0.7, 1.0}) {
      const auto kept = retained_entries(store, MaskOptions{0.5, f, 0.05});
      if (!first) CHECK(std::includes(prev.begin(), prev.end(), kept.begin(), kept.end()));
      prev = kept;
      first = false;
    }
  }
  SUBCASE("bad options") {
    MaskCandidateStore store;
    store.add("w00", Matrix(p, p, 0.25));
    CHECK_THROWS_AS(build_mask(store, MaskOptions{0.0, 0.5, 0.05}), ConfigError);
    CHECK_THROWS_AS(build_mask(store, MaskOptions{0.5, 1.5, 0.05}), ConfigError);
    CHECK_THROWS_AS(build_mask(store, MaskOptions{0.5, 0.5, 0.0}), ConfigError);
  }
}

TEST_CASE("cosine schedule") {
  const auto s = LrSchedule::cosine(2e-5, 10);
  CHECK(s.at(0) == 2e-5);
  CHECK(s.at(5) == doctest::Approx(1e-5));
  CHECK(s.at(10) == doctest::Approx(0.0).epsilon(1e-20));
  for (std::size_t t = 0; t < 10; ++t) CHECK(s.at(t + 1) <= s.at(t));
  CHECK(LrSchedule::constant(3.0).at(7) == 3.0);
}

TEST_CASE("adaptation with a mask") {
  constexpr std::size_t p = 5;
  const Surrogate model(tiny(), p);
  Rng rng(7);
  const ParamVector theta = model.init_params(3);
  const Batch support{random_matrix(5, p, rng, 0, 1), random_matrix(5, 1, rng)};
  ArchMask mask{random_matrix(p, p, rng, 0.1, 0.9), false};

  SUBCASE("zero steps change nothing") {
    const Adapted a = adapt_with_mask(model, theta, support, mask, 0, 1e-2);
    CHECK(a.theta == theta);
    CHECK(a.mask->m == mask.m);
  }
  SUBCASE("a learnable mask moves and stays inside [0, 1]") {
    const Adapted a = adapt_with_mask(model, theta, support, mask, 10, 0.5);
    CHECK_FALSE(a.mask->m == mask.m);
    CHECK_NOTHROW(a.mask->validate());
    CHECK_FALSE(a.mask->learnable);  // learnability is a property of the adaptation, not the result
  }
  SUBCASE("a frozen all-ones mask reduces to plain adaptation") {
    const Adapted masked = adapt_with_mask(model, theta, support, ArchMask::ones(p), 10, 1e-2, false);
    const Adapted plain = adapt(model, theta, support, AdaptOptions{10, LrSchedule::cosine(1e-2, 10), false});
    CHECK(bitwise_equal(masked.theta.values, plain.theta.values));
    const Adapted one = adapt_with_mask(model, theta, support, ArchMask::ones(p), 1, 1e-2, false);
    CHECK(bitwise_equal(one.theta.values, inner_adapt(model, theta, support, 1, 1e-2).values));
  }
  SUBCASE("repeated calls agree bitwise") {
    const Adapted a = adapt_with_mask(model, theta, support, mask, 4, 0.1);
    const Adapted b = adapt_with_mask(model, theta, support, mask, 4, 0.1);
    CHECK(a.theta == b.theta);
    CHECK(a.mask->m == b.mask->m);
  }
  SUBCASE("an all-zero mask row is rejected up front") {
    ArchMask bad = mask;
    for (std::size_t j = 0; j < p; ++j) bad.m(1, j) = 0.0;
    CHECK_THROWS_AS(adapt_with_mask(model, theta, support, bad, 2, 0.1), DegenerateMask);
  }
  SUBCASE("divergence surfaces as a numeric error") {
    CHECK_THROWS_AS(adapt_with_mask(model, theta, support, mask, 10, 1e3), NumericError);
  }
}
