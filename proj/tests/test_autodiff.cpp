#include <doctest.h>

#include <limits>

#include "metadse/autodiff.hpp"
#include "metadse/errors.hpp"
#include "support.hpp"

using namespace metadse;
using namespace metadse::test;

namespace {

constexpr std::size_t kSeeds = 20;

// Scalar probe: mean squared distance of the op output to a fixed target.
Var probe(Tape& t, Var out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {hash_tag("target")}));
  const Matrix& v = t.value(out);
  return t.mse(out, t.constant(random_matrix(v.rows(), v.cols(), rng)));
}

void expect_ok(const GradCheck& g) {
  INFO(g.first_failure);
  CHECK(g.checked > 0);
  CHECK(g.failed == 0);
}

}  // namespace

TEST_CASE("finite differences agree with every op's gradient") {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    SUBCASE("matmul") {
      expect_ok(check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)}, {true, true},
                                [&](Tape& t, const auto& x) { return probe(t, t.matmul(x[0], x[1]), seed); }));
    }
    SUBCASE("add, add_row, mul_row, scale") {
      expect_ok(check_gradients({random_matrix(3, 4, rng), random_matrix(3, 4, rng), random_matrix(1, 4, rng),
                                 random_matrix(1, 4, rng)},
                                {true, true, true, true}, [&](Tape& t, const auto& x) {
                                  Var a = t.add(x[0], x[1]);
                                  a = t.add_row(a, x[2]);
                                  a = t.mul_row(a, x[3]);
                                  return probe(t, t.scale(a, -1.7), seed);
                                }));
    }
    SUBCASE("softmax_rows") {
      expect_ok(check_gradients({random_matrix(4, 5, rng, -3, 3)}, {true},
                                [&](Tape& t, const auto& x) { return probe(t, t.softmax_rows(x[0]), seed); }));
    }
    SUBCASE("row_normalize") {
      expect_ok(check_gradients({random_matrix(4, 5, rng, 0.1, 2.0)}, {true},
                                [&](Tape& t, const auto& x) { return probe(t, t.row_normalize(x[0]), seed); }));
    }
    SUBCASE("relu") {
      expect_ok(check_gradients({away_from_zero(4, 5, rng)}, {true},
                                [&](Tape& t, const auto& x) { return probe(t, t.relu(x[0]), seed); }));
    }
    SUBCASE("layernorm_rows") {
      expect_ok(check_gradients({random_matrix(4, 6, rng, -2, 2)}, {true},
                                [&](Tape& t, const auto& x) { return probe(t, t.layernorm_rows(x[0]), seed); }));
    }
    SUBCASE("hadamard") {
      expect_ok(check_gradients({random_matrix(3, 3, rng), random_matrix(3, 3, rng)}, {true, true},
                                [&](Tape& t, const auto& x) { return probe(t, t.hadamard(x[0], x[1]), seed); }));
    }
    SUBCASE("mse against a differentiable target") {
      expect_ok(check_gradients({random_matrix(5, 2, rng), random_matrix(5, 2, rng)}, {true, true},
                                [&](Tape& t, const auto& x) { return t.mse(x[0], x[1]); }));
    }
    SUBCASE("mean_blocks") {
      expect_ok(check_gradients({random_matrix(6, 3, rng)}, {true},
                                [&](Tape& t, const auto& x) { return probe(t, t.mean_blocks(x[0], 3), seed); }));
    }
    SUBCASE("token_embed") {
      expect_ok(check_gradients({random_matrix(2, 4, rng, 0, 1), random_matrix(4, 3, rng), random_matrix(4, 3, rng)},
                                {true, true, true},
                                [&](Tape& t, const auto& x) { return probe(t, t.token_embed(x[0], x[1], x[2]), seed); }));
    }
    SUBCASE("attention without a mask") {
      expect_ok(check_gradients({random_matrix(8, 4, rng), random_matrix(8, 4, rng), random_matrix(8, 4, rng)},
                                {true, true, true}, [&](Tape& t, const auto& x) {
                                  return probe(t, t.attention(x[0], x[1], x[2], std::nullopt, 2, 4), seed);
                                }));
    }
    SUBCASE("attention with a learnable mask") {
      expect_ok(check_gradients({random_matrix(8, 4, rng), random_matrix(8, 4, rng), random_matrix(8, 4, rng),
                                 random_matrix(4, 4, rng, 0.1, 1.0)},
                                {true, true, true, true}, [&](Tape& t, const auto& x) {
                                  return probe(t, t.attention(x[0], x[1], x[2], x[3], 2, 4), seed);
                                }));
    }
  }
}

TEST_CASE("backward contracts") {
  Rng rng(3);
  Tape t;
  Var a = t.leaf(random_matrix(2, 3, rng));
  SUBCASE("non-scalar target is rejected") { CHECK_THROWS_AS(t.backward(a), ContractError); }
  SUBCASE("shape mismatch is rejected") {
    Var b = t.leaf(random_matrix(2, 3, rng));
    CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
    CHECK_THROWS_AS(t.add(a, t.leaf(random_matrix(3, 2, rng))), ShapeError);
  }
  SUBCASE("non-finite values are reported") {
    Matrix bad(1, 3, 1.0);
    bad(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(t.add_row(a, t.leaf(bad)), NumericError);
  }
  SUBCASE("an all-zero mask row is degenerate") {
    Var q = t.leaf(random_matrix(4, 2, rng));
    Matrix m(2, 2, 1.0);
    m(1, 0) = m(1, 1) = 0.0;
    CHECK_THROWS_AS(t.attention(q, q, q, t.leaf(m), 1, 2), DegenerateMask);
  }
  SUBCASE("repeated backward gives identical gradients") {
    Var loss = t.mse(t.softmax_rows(a), t.constant(Matrix(2, 3, 0.25)));
    t.backward(loss);
    const Matrix first = t.grad(a);
    t.backward(loss);
    CHECK(bitwise_equal(first.data(), t.grad(a).data()));
  }
}

TEST_CASE("attention weights are row-stochastic and a ones mask changes nothing") {
  Rng rng(11);
  const Matrix q = random_matrix(6, 4, rng), k = random_matrix(6, 4, rng), v = random_matrix(6, 4, rng);
  Tape plain, masked;
  Var a = plain.attention(plain.leaf(q), plain.leaf(k), plain.leaf(v), std::nullopt, 2, 3);
  Var b = masked.attention(masked.leaf(q), masked.leaf(k), masked.leaf(v), masked.leaf(Matrix(3, 3, 1.0)), 2, 3);
  CHECK(bitwise_equal(plain.value(a).data(), masked.value(b).data()));
  const auto& w = plain.attention_weights(a);
  REQUIRE(w.size() == 4);  // 2 sequences x 2 heads
  for (const auto& m : w)
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var s = t.softmax_rows(t.leaf(Matrix(1, 4, 3.0)));
  for (std::size_t j = 0; j < 4; ++j) CHECK(t.value(s)(0, j) == 0.25);
}
