#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "metadse/checkpoint.hpp"
#include "metadse/errors.hpp"
#include "metadse/meta_trainer.hpp"
#include "metadse/surrogate.hpp"
#include "support.hpp"

using namespace metadse;
using namespace metadse::test;

namespace {

PredictorConfig small_config(OutputKind outputs = OutputKind::Both) {
  PredictorConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.mlp_hidden = 8;
  c.outputs = outputs;
  return c;
}

Batch random_batch(std::size_t n, std::size_t p, std::size_t outputs, Rng& rng) {
  return Batch{random_matrix(n, p, rng, 0.0, 1.0), random_matrix(n, outputs, rng)};
}

// Independent count: sum the shapes of every block by hand.
std::size_t hand_count(const PredictorConfig& c, std::size_t p) {
  const std::size_t d = c.embed_dim, f = c.mlp_hidden, o = c.output_count();
  std::size_t n = p * d + p * d;  // value and parameter embeddings
  for (std::size_t l = 0; l < c.layers; ++l) {
    n += 2 * d;              // ln1
    n += 4 * (d * d + d);    // q, k, v, o projections
    n += 2 * d;              // ln2
    n += d * f + f + f * d + d;  // feed-forward
  }
  n += 2 * d;              // final ln
  n += d * f + f + f * o + o;  // head
  return n;
}

}  // namespace

TEST_CASE("parameter count matches the closed form and the layout") {
  for (std::size_t d : {4u, 8u, 32u})
    for (std::size_t layers : {1u, 2u, 3u})
      for (std::size_t p : {1u, 5u, 20u})
        for (auto out : {OutputKind::Ipc, OutputKind::Both}) {
          PredictorConfig c;
          c.embed_dim = d;
          c.heads = d / 4 ? d / 4 : 1;
          c.layers = layers;
          c.mlp_hidden = 2 * d;
          c.outputs = out;
          const ParamLayout layout(c, p);
          CHECK(layout.total() == hand_count(c, p));
          CHECK(ParamLayout::count(c, p) == hand_count(c, p));
          std::size_t sum = 0;
          for (const auto& s : layout.segments()) {
            CHECK(s.offset == sum);
            sum += s.size();
          }
          CHECK(sum == layout.total());
        }
}

TEST_CASE("flatten and unflatten round-trip exactly") {
  const Surrogate model(small_config(), 6);
  const ParamVector theta = model.init_params(42);
  CHECK(flatten(model.layout(), unflatten(model.layout(), theta)) == theta);
}

TEST_CASE("init_params is deterministic and follows the initialization scheme") {
  const Surrogate model(small_config(), 6);
  CHECK(model.init_params(1) == model.init_params(1));
  CHECK_FALSE(model.init_params(1) == model.init_params(2));
  const auto segs = unflatten(model.layout(), model.init_params(1));
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = model.layout().segments()[i];
    for (double x : segs[i].data()) {
      if (s.kind == SegmentKind::Bias) CHECK(x == 0.0);
      if (s.kind == SegmentKind::Gain) CHECK(x == 1.0);
      if (s.kind == SegmentKind::Weight) {
        const double limit = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
        CHECK(std::abs(x) <= limit);
      }
    }
  }
}

TEST_CASE("surrogate gradients match finite differences, mask included") {
  constexpr std::size_t p = 5;
  const Surrogate model(small_config(), p);
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    ParamVector theta = model.init_params(seed);
    for (double& x : theta.values) x += rng.uniform(-0.1, 0.1);  // move gains and biases off their init
    const Batch batch = random_batch(3, p, 2, rng);
    ArchMask mask{random_matrix(p, p, rng, 0.2, 0.8), true};
    const LossAndGrad lg = model.loss_and_grad(theta, batch, &mask);
    REQUIRE(lg.grad.size() == theta.size());
    REQUIRE(lg.mask_grad.rows() == p);
    CHECK(lg.loss == model.loss(theta, batch, &mask));

    std::size_t failed = 0;
    std::string first;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      ParamVector t = theta;
      t.values[k] = theta.values[k] + h;
      const double up = model.loss(t, batch, &mask);
      t.values[k] = theta.values[k] - h;
      const double down = model.loss(t, batch, &mask);
      const double numeric = (up - down) / (2 * h);
      if (!close(lg.grad[k], numeric) && failed++ == 0)
        first = "theta[" + std::to_string(k) + "] " + std::to_string(lg.grad[k]) + " vs " + std::to_string(numeric);
    }
    for (std::size_t k = 0; k < p * p; ++k) {
      ArchMask m = mask;
      m.m.data()[k] = mask.m.data()[k] + h;
      const double up = model.loss(theta, batch, &m);
      m.m.data()[k] = mask.m.data()[k] - h;
      const double down = model.loss(theta, batch, &m);
      const double numeric = (up - down) / (2 * h);
      if (!close(lg.mask_grad.data()[k], numeric) && failed++ == 0)
        first = "mask[" + std::to_string(k) + "] " + std::to_string(lg.mask_grad.data()[k]) + " vs " +
                std::to_string(numeric);
    }
    INFO(first);
    CHECK(failed == 0);
  }
}

TEST_CASE("a frozen mask gets no gradient") {
  const Surrogate model(small_config(), 4);
  Rng rng(5);
  ArchMask mask{random_matrix(4, 4, rng, 0.2, 0.8), false};
  CHECK(model.loss_and_grad(model.init_params(1), random_batch(2, 4, 2, rng), &mask).mask_grad.size() == 0);
}

TEST_CASE("an all-ones mask is bitwise identical to no mask") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    Rng rng(derive_seed(seed, {hash_tag("identity")}));
    PredictorConfig c;
    c.heads = 1 + rng.below(3);
    c.embed_dim = c.heads * (1 + rng.below(4));
    c.layers = 1 + rng.below(3);
    c.mlp_hidden = 1 + rng.below(12);
    c.outputs = rng.below(2) ? OutputKind::Both : OutputKind::Ipc;
    const std::size_t p = 1 + rng.below(8);
    const std::size_t n = 1 + rng.below(6);
    const Surrogate model(c, p);
    const ParamVector theta = model.init_params(seed);
    const Batch batch = random_batch(n, p, c.output_count(), rng);
    const ArchMask ones = ArchMask::ones(p);

    CHECK(bitwise_equal(model.forward(theta, batch.features).outputs.data(),
                        model.forward(theta, batch.features, &ones).outputs.data()));
    const double a = model.loss(theta, batch), b = model.loss(theta, batch, &ones);
    CHECK(std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b));
    CHECK(bitwise_equal(model.loss_and_grad(theta, batch).grad, model.loss_and_grad(theta, batch, &ones).grad));

    const AdaptOptions opt{10, LrSchedule::cosine(1e-3, 10), false};
    const Adapted plain = adapt(model, theta, batch, opt);
    const Adapted masked = adapt(model, theta, batch, opt, &ones);
    CHECK(bitwise_equal(plain.theta.values, masked.theta.values));
  }
}

TEST_CASE("surrogate input validation") {
  const Surrogate model(small_config(), 4);
  Rng rng(2);
  const ParamVector theta = model.init_params(1);
  CHECK_THROWS_AS(model.forward(ParamVector{{1.0, 2.0}}, random_matrix(1, 4, rng)), ShapeError);
  CHECK_THROWS_AS(model.forward(theta, random_matrix(1, 3, rng)), ShapeError);
  ArchMask wrong = ArchMask::ones(3);
  CHECK_THROWS_AS(model.forward(theta, random_matrix(1, 4, rng), &wrong), ShapeError);
  ArchMask zero_row = ArchMask::ones(4);
  for (std::size_t j = 0; j < 4; ++j) zero_row.m(2, j) = 0.0;
  CHECK_THROWS_AS(model.forward(theta, random_matrix(1, 4, rng), &zero_row), DegenerateMask);
  PredictorConfig bad = small_config();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mask clamping resets rows that collapse to zero") {
  ArchMask m = ArchMask::ones(3);
  m.m(0, 0) = 1.5;
  m.m(0, 1) = -0.2;
  m.m(1, 0) = m.m(1, 1) = m.m(1, 2) = -1.0;
  CHECK(m.clamp() == 1);
  CHECK(m.m(0, 0) == 1.0);
  CHECK(m.m(0, 1) == 0.0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(m.m(1, j) == 1.0 / 3.0);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("checkpoint round trip is bit exact") {
  const PredictorConfig c = small_config();
  const Surrogate model(c, 6);
  Checkpoint ckpt;
  ckpt.config = c;
  ckpt.params = 6;
  ckpt.scaler.outputs = c.outputs;
  ckpt.scaler.mean = {1.2345678901234567, 3.3};
  ckpt.scaler.scale = {0.1, 7.0 / 3.0};
  ckpt.theta = model.init_params(9);
  ckpt.theta.values[0] = -0.0;
  ckpt.theta.values[1] = 5e-324;  // subnormal
  ckpt.metadata = {{"pretrain.config_hash", "0123456789abcdef"}, {"split.test", "w01 w02"}};

  SUBCASE("without a mask") {
    const std::string bytes = serialize_checkpoint(ckpt);
    CHECK(bytes.rfind("MDSE\n", 0) == 0);
    const Checkpoint back = deserialize_checkpoint(bytes, "mem");
    CHECK(back.config == ckpt.config);
    CHECK(back.scaler == ckpt.scaler);
    CHECK(bitwise_equal(back.theta.values, ckpt.theta.values));
    CHECK_FALSE(back.mask.has_value());
    CHECK(back.metadata == ckpt.metadata);
    CHECK(serialize_checkpoint(back) == bytes);
  }
  SUBCASE("with a mask, through a file") {
    Rng rng(4);
    ckpt.mask = ArchMask{random_matrix(6, 6, rng, 0.05, 1.0), false};
    const auto path = (std::filesystem::temp_directory_path() / "metadse_ckpt_test.mdse").string();
    save_checkpoint(path, ckpt);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    REQUIRE(back.mask.has_value());
    CHECK(*back.mask == *ckpt.mask);
    CHECK(bitwise_equal(back.theta.values, ckpt.theta.values));
  }
  SUBCASE("corrupt files are schema errors") {
    std::string bytes = serialize_checkpoint(ckpt);
    CHECK_THROWS_AS(deserialize_checkpoint("hello", "mem"), SchemaError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3), "mem"), SchemaError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x", "mem"), SchemaError);
    std::string wrong_version = bytes;
    wrong_version.replace(wrong_version.find("format_version = 1"), 18, "format_version = 2");
    CHECK_THROWS_AS(deserialize_checkpoint(wrong_version, "mem"), SchemaError);
  }
  SUBCASE("a parameter vector of the wrong length is rejected on save") {
    ckpt.theta.values.pop_back();
    CHECK_THROWS_AS(serialize_checkpoint(ckpt), ShapeError);
  }
}
