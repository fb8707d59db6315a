#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "svelift/common.hpp"
#include "svelift/levy.hpp"
#include "svelift/rng.hpp"
#include "test_util.hpp"

using namespace svelift;

namespace {

LevyModel single_mark(double rate) {
  LevyModel m;
  m.marks = {{1.0}};
  m.rates = {rate};
  return m;
}

}  // namespace

TEST_CASE("model validation rejects malformed mark systems") {
  LevyModel m;
  CHECK_THROWS_AS(m.validate(), ConfigError);  // empty
  m.marks = {{1.0}, {-1.0}};
  m.rates = {1.0};
  CHECK_THROWS_AS(m.validate(), ConfigError);  // size mismatch
  m.rates = {1.0, 0.0};
  CHECK_THROWS_AS(m.validate(), ConfigError);  // nonpositive rate
  m.rates = {1.0, 2.0};
  CHECK_NOTHROW(m.validate());
  m.marks = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(m.validate(), ConfigError);  // ragged mark dimension
}

TEST_CASE("base sampler: event count matches the rate") {
  const LevyModel model = single_mark(2.0);
  Stream rng(101);
  const std::size_t n = 100000;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    total += static_cast<double>(sample_path(model, 1.0, rng).events.size());
  const double mean = total / static_cast<double>(n);
  CHECK(mean > 1.97);
  CHECK(mean < 2.03);
}

TEST_CASE("base sampler: events sorted and inside the horizon") {
  LevyModel model;
  model.marks = {{1.0, 0.0}, {0.0, -1.0}};
  model.rates = {3.0, 2.0};
  Stream rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const JumpPath p = sample_path(model, 2.5, rng);
    CHECK(p.horizon == 2.5);
    double prev = 0.0;
    for (const JumpEvent& e : p.events) {
      CHECK(e.time > prev);
      CHECK(e.time <= 2.5);
      CHECK(e.mark < model.n_marks());
      prev = e.time;
    }
  }
}

TEST_CASE("base sampler: marks drawn proportional to the rates") {
  LevyModel model;
  model.marks = {{1.0}, {-1.0}};
  model.rates = {1.0, 3.0};
  Stream rng(7);
  std::size_t second = 0, all = 0;
  for (int rep = 0; rep < 100000; ++rep) {
    const JumpPath p = sample_path(model, 1.0, rng);
    all += p.events.size();
    for (const JumpEvent& e : p.events) second += (e.mark == 1);
  }
  const double frac = static_cast<double>(second) / static_cast<double>(all);
  CHECK(frac > 0.745);
  CHECK(frac < 0.755);
}

TEST_CASE("base sampler: first inter-arrival time is exponential") {
  const double lambda = 1.7;
  const LevyModel model = single_mark(lambda);
  Stream rng(12345);
  std::vector<double> first;
  first.reserve(10000);
  const double horizon = 50.0 / lambda;  // censoring is negligible
  while (first.size() < 10000) {
    const JumpPath p = sample_path(model, horizon, rng);
    if (!p.events.empty()) first.push_back(p.events.front().time);
  }
  const double p = testutil::ks_one_sample_p(
      first, [&](double t) { return 1.0 - std::exp(-lambda * t); });
  CHECK(p > 0.01);
}

TEST_CASE("thinning with a flat ratio above one raises the rate") {
  const LevyModel model = single_mark(2.0);
  Stream rng(99);
  const auto ratio = [](double, std::size_t) { return 1.5; };
  double total = 0.0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i)
    total += static_cast<double>(
        thinning_sample(model, 1.0, 2.0, ratio, rng).events.size());
  const double mean = total / static_cast<double>(n);
  CHECK(mean > 2.97);
  CHECK(mean < 3.03);
}

TEST_CASE("thinning with unit ratio reproduces the base law") {
  const double lambda = 3.0;
  const LevyModel model = single_mark(lambda);
  const auto ratio = [](double, std::size_t) { return 1.0; };
  Stream rng(31);
  std::vector<double> first;
  first.reserve(10000);
  while (first.size() < 10000) {
    const JumpPath p = thinning_sample(model, 20.0 / lambda, 2.0, ratio, rng);
    if (!p.events.empty()) first.push_back(p.events.front().time);
  }
  const double p = testutil::ks_one_sample_p(
      first, [&](double t) { return 1.0 - std::exp(-lambda * t); });
  CHECK(p > 0.01);
}

TEST_CASE("thinning rejects ratios outside the dominating band") {
  const LevyModel model = single_mark(5.0);
  Stream rng(1);
  const auto too_big = [](double, std::size_t) { return 4.0; };
  try {
    thinning_sample(model, 10.0, 2.0, too_big, rng);
    FAIL("expected a bound violation");
  } catch (const IntensityBoundError& e) {
    CHECK(e.ratio() == 4.0);
    CHECK(e.bound() == 2.0);
    CHECK(e.mark() == 0);
    CHECK(e.time() > 0.0);
  }
  const auto zero = [](double, std::size_t) { return 0.0; };
  CHECK_THROWS_AS(thinning_sample(model, 10.0, 2.0, zero, rng),
                  IntensityBoundError);
}

TEST_CASE("thinning acceptance hook fires once per event, in order") {
  const LevyModel model = single_mark(4.0);
  Stream rng(17);
  std::vector<double> seen;
  const JumpPath p = thinning_sample(
      model, 3.0, 2.0, [](double, std::size_t) { return 1.3; }, rng,
      [&](const JumpEvent& e) { seen.push_back(e.time); });
  REQUIRE(seen.size() == p.events.size());
  for (std::size_t i = 0; i < seen.size(); ++i)
    CHECK(seen[i] == p.events[i].time);
  CHECK(std::is_sorted(seen.begin(), seen.end()));
}

TEST_CASE("likelihood ratio: closed form for a constant tilt") {
  const LevyModel model = single_mark(2.0);
  JumpPath path;
  path.horizon = 1.0;
  path.events = {{0.2, 0}, {0.55, 0}, {0.9, 0}};
  const double c = 1.5;
  const GirsanovWeight w = girsanov_weight(
      path, model, [&](double, std::size_t) { return c; });
  const double expected = std::pow(c, 3) * std::exp(-(c - 1.0) * 2.0 * 1.0);
  CHECK(w.weight() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(w.compensator ==
        doctest::Approx((c - 1.0) * 2.0 * 1.0).epsilon(1e-12));
  CHECK(w.jump_log_sum == doctest::Approx(3.0 * std::log(c)).epsilon(1e-12));
}

TEST_CASE("likelihood ratio: polynomial tilt integrates exactly") {
  const LevyModel model = single_mark(3.0);
  JumpPath path;
  path.horizon = 1.0;  // no events: pure compensator
  const GirsanovWeight w = girsanov_weight(
      path, model, [](double t, std::size_t) { return 1.0 + t * t; });
  // integral of (r - 1) * lambda = 3 * T^3 / 3 = 1; Simpson is exact here.
  CHECK(w.compensator == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.jump_log_sum == 0.0);
}

TEST_CASE("likelihood ratio rejects nonpositive ratios at events") {
  const LevyModel model = single_mark(1.0);
  JumpPath path;
  path.horizon = 1.0;
  path.events = {{0.5, 0}};
  CHECK_THROWS_AS(
      girsanov_weight(path, model,
                      [](double t, std::size_t) { return t < 0.4 ? 1.0 : -1.0; }),
      NumericalError);
}

TEST_CASE("reweighted base samples have unit mean weight") {
  const LevyModel model = single_mark(2.0);
  Stream rng(2718);
  for (double c : {0.5, 1.5}) {
    double sum = 0.0, sumsq = 0.0;
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i) {
      const JumpPath p = sample_path(model, 1.0, rng);
      const double w =
          girsanov_weight(p, model, [&](double, std::size_t) { return c; })
              .weight();
      sum += w;
      sumsq += w * w;
    }
    const double mean = sum / static_cast<double>(n);
    const double var =
        (sumsq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    const double se = std::sqrt(var / static_cast<double>(n));
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
  }
}

TEST_CASE("identical seeds reproduce identical paths") {
  LevyModel model;
  model.marks = {{1.0}, {-0.5}};
  model.rates = {2.0, 1.0};
  Stream a(55), b(55);
  const JumpPath pa = sample_path(model, 2.0, a);
  const JumpPath pb = sample_path(model, 2.0, b);
  REQUIRE(pa.events.size() == pb.events.size());
  for (std::size_t i = 0; i < pa.events.size(); ++i) {
    CHECK(pa.events[i].time == pb.events[i].time);
    CHECK(pa.events[i].mark == pb.events[i].mark);
  }
}
