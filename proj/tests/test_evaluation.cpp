#include <doctest.h>

#include <cmath>

#include "metadse/errors.hpp"
#include "metadse/evaluation.hpp"
#include "support.hpp"

using namespace metadse;
using namespace metadse::test;

namespace {

// Straightforward long-double versions of the three metrics.
long double ref_rmse(const std::vector<double>& p, const std::vector<double>& y) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (static_cast<long double>(y[i]) - p[i]) * (static_cast<long double>(y[i]) - p[i]);
  return std::sqrt(s / p.size());
}
long double ref_mape(const std::vector<double>& p, const std::vector<double>& y) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs((static_cast<long double>(y[i]) - p[i]) / y[i]);
  return 100.0L * s / p.size();
}
long double ref_ev(const std::vector<double>& p, const std::vector<double>& y) {
  long double mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    num += (static_cast<long double>(y[i]) - p[i]) * (static_cast<long double>(y[i]) - p[i]);
    den += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0L - num / den;
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

TEST_CASE("metric examples") {
  CHECK(rmse(std::vector<double>{0}, std::vector<double>{3}) == 3.0);
  CHECK(rmse(std::vector<double>{1, 1}, std::vector<double>{0, 2}) == 1.0);
  CHECK(mape(std::vector<double>{1}, std::vector<double>{2}) == 50.0);
  CHECK(mape(std::vector<double>{2, 3}, std::vector<double>{4, 2}) == 50.0);
  CHECK(explained_variance(std::vector<double>{10, 10}, std::vector<double>{0, 1}) < 0.0);
  const std::vector<double> y{1.5, 2.0, 4.0, 0.5};
  CHECK(rmse(y, y) == 0.0);
  CHECK(mape(y, y) == 0.0);
  CHECK(explained_variance(y, y) == 1.0);
  const std::vector<double> mean(4, 2.0);
  CHECK(explained_variance(mean, y) == 0.0);
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), ContractError);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ContractError);
  try {
    mape(std::vector<double>{1, 1}, std::vector<double>{1, 0});
    FAIL("expected DivisionByZero");
  } catch (const DivisionByZero& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
  CHECK_THROWS_AS(explained_variance(std::vector<double>{1, 2}, std::vector<double>{3, 3}), ContractError);
}

TEST_CASE("metrics agree with a long-double reference on random vectors") {
  Rng rng(2024);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> p(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
      y[k] = rng.uniform(0.1, 5.0);
      p[k] = y[k] + rng.uniform(-1.0, 1.0);
    }
    worst = std::max({worst, static_cast<double>(std::fabs(rmse(p, y) - ref_rmse(p, y))),
                      static_cast<double>(std::fabs(mape(p, y) - ref_mape(p, y)) / 100.0),
                      static_cast<double>(std::fabs(explained_variance(p, y) - ref_ev(p, y)))});
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("confidence intervals and geometric mean") {
  const MeanCi ci = mean_ci(std::vector<double>{1, 2, 3});
  CHECK(ci.mean == 2.0);
  CHECK(ci.half_width == doctest::Approx(1.96 / std::sqrt(3.0)));
  CHECK(ci.n == 3);
  CHECK(mean_ci(std::vector<double>{4}).half_width == 0.0);
  CHECK(mean_ci(std::vector<double>{}).n == 0);
  CHECK(geomean(std::vector<double>{1, 100}) == doctest::Approx(10.0));
  CHECK(geomean(std::vector<double>{0, 1}) == doctest::Approx(1e-6));
  CHECK_THROWS_AS(geomean(std::vector<double>{}), ContractError);
}

TEST_CASE("evaluation protocol") {
  const DesignSpace space = canonical_space();
  const Surrogate model(tiny(), space.dims());
  const ParamVector theta = model.init_params(3);
  std::vector<WorkloadSource> sources;
  for (auto& s : gen_family(2, {}, 4)) sources.push_back(WorkloadSource::synthetic(std::move(s), space));
  const auto scaler = TargetScaler::fit(OutputKind::Ipc, sources, 1);
  ProtocolConfig pc;
  pc.tasks = 12;
  pc.query = 20;
  pc.seed = 8;

  SUBCASE("a predictor that produced the labels scores perfectly") {
    TargetScaler sc = TargetScaler::identity(OutputKind::Ipc);
    sc.mean[0] = 5.0;  // keeps labels positive
    auto rows = sources[0].draw(200, 3);
    Matrix x(rows.size(), space.dims());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < space.dims(); ++j) x(i, j) = rows[i].features[j];
    const Matrix pred = model.forward(theta, x).outputs;
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].labels.ipc = sc.to_label(0, pred(i, 0));
    const auto perfect = WorkloadSource::dataset("w00", space, rows);
    ProtocolConfig frozen = pc;
    frozen.lr = 0.0;
    const auto r = run_protocol(model, sc, Arm{"oracle", &theta}, {perfect}, frozen, 1);
    CHECK(r.workloads[0].outputs.at("ipc").rmse.mean == 0.0);
    CHECK(r.workloads[0].outputs.at("ipc").ev.mean == 1.0);
  }
  SUBCASE("deterministic and thread independent") {
    const auto a = run_protocol(model, scaler, Arm{"m", &theta}, sources, pc, 1);
    const auto b = run_protocol(model, scaler, Arm{"m", &theta}, sources, pc, 4);
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.workloads.size() == 2);
    CHECK(a.workloads[0].tasks == 12);
    CHECK(a.workloads[0].outputs.at("ipc").rmse.n == 12);
    CHECK(a.workloads[0].outputs.at("ipc").rmse.half_width >= 0.0);
    CHECK(a.geomean_rmse("ipc") > 0.0);
    CHECK(a.to_markdown("t").find("GEOMEAN") != std::string::npos);
  }
  SUBCASE("task failures are counted, not fatal") {
    ProtocolConfig wild = pc;
    wild.lr = 1e6;
    wild.steps = 30;
    const auto r = run_protocol(model, scaler, Arm{"m", &theta}, sources, wild, 1);
    CHECK(r.failed() == 24);
    CHECK(r.workloads[0].outputs.at("ipc").rmse.n == 0);
  }
  SUBCASE("ablation arms share task streams, and a frozen ones mask equals no mask") {
    const ArchMask ones = ArchMask::ones(space.dims());
    const ParamVector scratch = model.init_params(99);
    const auto res = ablation(model, scaler,
                              {Arm{"a", &theta, &ones, false}, Arm{"b", &theta}, Arm{"c", &scratch}}, sources, pc, 1);
    CHECK(res.identical_task_streams());
    for (std::size_t w = 0; w < 2; ++w) {
      const auto& a = res.reports[0].workloads[w].outputs.at("ipc");
      const auto& b = res.reports[1].workloads[w].outputs.at("ipc");
      CHECK(std::bit_cast<std::uint64_t>(a.rmse.mean) == std::bit_cast<std::uint64_t>(b.rmse.mean));
      CHECK(std::bit_cast<std::uint64_t>(a.ev.half_width) == std::bit_cast<std::uint64_t>(b.ev.half_width));
    }
    const auto rerun = ablation(model, scaler, {Arm{"c", &scratch}}, sources, pc, 1);
    CHECK(rerun.reports[0].to_csv("c") == res.reports[2].to_csv("c"));
    const std::string csv = res.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2 * 3 + static_cast<long>(res.reports[0].metadata.size()));
    CHECK(res.to_markdown().find("identical task streams: yes") != std::string::npos);
  }
  SUBCASE("an arm without parameters is a contract violation") {
    CHECK_THROWS_AS(run_protocol(model, scaler, Arm{"x"}, sources, pc, 1), ContractError);
  }
}
