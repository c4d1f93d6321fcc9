#include "exo/metrics.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>

using namespace exo;

namespace {

TrajectoryLog synthetic(double T, double dt, const std::function<Vec5(double)>& E,
                        const std::function<Vec5(double)>& u) {
  TrajectoryLog log;
  log.dt = dt;
  const auto n = static_cast<long>(std::llround(T / dt));
  for (long k = 0; k <= n; ++k) {
    TrajectoryRow r;
    r.t = static_cast<double>(k) * dt;
    r.E = E(r.t);
    r.u = u(r.t);
    log.rows.push_back(r);
  }
  return log;
}

Vec5 axis0(double v) {
  Vec5 x = Vec5::Zero();
  x[0] = v;
  return x;
}

Vec5 wave(double t) {
  return (Vec5() << std::sin(t), 0.5 * std::cos(2.0 * t), 0.2, -0.3 * std::sin(0.5 * t), 0.0).finished();
}

}  // namespace

TEST_CASE("zero signals give zero metrics") {
  const auto log = synthetic(2.0, 1e-3, [](double) { return Vec5::Zero(); }, [](double) { return Vec5::Zero(); });
  const MetricsReport r = compute_metrics(log);
  CHECK(r.ise == 0.0);
  CHECK(r.itse == 0.0);
  CHECK(r.ce == 0.0);
  CHECK(r.acm == 0.0);
  CHECK(r.chatter_index == 0.0);
  CHECK(r.samples == log.rows.size());
}

TEST_CASE("constant error closed forms") {
  for (double c : {0.5, -1.7, 3.0}) {
    const double T = 4.0;
    const auto log = synthetic(T, 1e-3, [&](double) { return axis0(c); }, [&](double) { return axis0(2.0 * c); });
    const MetricsReport r = compute_metrics(log);
    CHECK(std::abs(r.ise - c * c * T) < 1e-8);
    CHECK(std::abs(r.itse - c * c * T * T / 2.0) < 1e-8);
    CHECK(std::abs(r.acm - std::abs(c)) < 1e-8);
    CHECK(std::abs(r.ce - 4.0 * c * c * T) < 1e-8);
    CHECK(r.chatter_index == 0.0);
  }
}

TEST_CASE("metric properties") {
  const auto base = synthetic(10.0, 1e-3, wave, [](double t) { return 3.0 * wave(t + 1.0); });
  const MetricsReport r = compute_metrics(base);
  CHECK(r.ise >= 0.0);
  CHECK(r.itse >= 0.0);
  CHECK(r.ce >= 0.0);
  CHECK(r.acm >= 0.0);

  // scale
  const double a = 2.5;
  TrajectoryLog scaled = base;
  for (auto& row : scaled.rows) row.E *= a;
  const MetricsReport s = compute_metrics(scaled);
  CHECK(s.ise == doctest::Approx(a * a * r.ise).epsilon(1e-12));
  CHECK(s.itse == doctest::Approx(a * a * r.itse).epsilon(1e-12));
  CHECK(s.acm == doctest::Approx(a * r.acm).epsilon(1e-12));
  CHECK(s.ce == r.ce);

  // finer sampling of the same smooth signal
  const auto fine = synthetic(10.0, 5e-4, wave, [](double t) { return 3.0 * wave(t + 1.0); });
  const MetricsReport f = compute_metrics(fine);
  CHECK(std::abs(f.ise - r.ise) / r.ise < 1e-6);
  CHECK(std::abs(f.itse - r.itse) / r.itse < 1e-6);
  CHECK(std::abs(f.ce - r.ce) / r.ce < 1e-6);
  CHECK(std::abs(f.acm - r.acm) / r.acm < 1e-6);

  // ISE and CE never decrease as the log grows
  double prev_ise = 0.0, prev_ce = 0.0;
  for (std::size_t n = 2; n <= base.rows.size(); n += 250) {
    TrajectoryLog head = base;
    head.rows.resize(n);
    const MetricsReport h = compute_metrics(head);
    CHECK(h.ise >= prev_ise);
    CHECK(h.ce >= prev_ce);
    prev_ise = h.ise;
    prev_ce = h.ce;
  }
}

TEST_CASE("bad logs are rejected") {
  CHECK_THROWS_AS(compute_metrics(TrajectoryLog{}), InvalidArgument);
  auto log = synthetic(1.0, 1e-2, wave, wave);
  log.rows[50].t += 3e-3;
  CHECK_THROWS_AS(compute_metrics(log), InvalidArgument);
}

TEST_CASE("comparison table and serialization") {
  MetricsReport a;
  a.controller = "ITSMC";
  a.scenario = "1";
  a.ise = 1.0 / 3.0;
  a.itse = 2e-9;
  a.ce = 12345.678901234567;
  a.acm = 0.1;
  a.chatter_index = 7.0;

  const std::vector<MetricsReport> one{a};
  const std::string md = comparison_markdown(one);
  CHECK(md.rfind("| Controller | ISE | ITSE | CE | ACM |", 0) == 0);
  CHECK(std::count(md.begin(), md.end(), '\n') >= 3);
  const std::string csv = comparison_csv(one);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.find("ISE,ITSE,CE,ACM") != std::string::npos);

  MetricsReport b = a;
  b.controller = "SMC";
  b.ise = 1e300;
  const std::vector<MetricsReport> two{a, b};
  const auto back = parse_comparison_csv(comparison_csv(two));
  REQUIRE(back.size() == 2);
  CHECK(back[0].controller == "ITSMC");
  CHECK(back[1].controller == "SMC");
  CHECK(back[0].ise == a.ise);
  CHECK(back[0].ce == a.ce);
  CHECK(back[1].ise == b.ise);
  CHECK(back[0].chatter_index == a.chatter_index);

  const MetricsReport j = metrics_from_json(metrics_json(a));
  CHECK(j.controller == a.controller);
  CHECK(j.ise == a.ise);
  CHECK(j.itse == a.itse);
  CHECK(j.acm == a.acm);
  CHECK(nlohmann::json::parse(metrics_json(a)).contains("chatter_index_supplementary"));
}
