#include <doctest.h>

#include <json.hpp>

#include "mer/calibration.hpp"
#include "mer/error.hpp"
#include "mer/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mer;

namespace {

std::vector<bool> column(const std::vector<EmotionVector>& rows, std::size_t e, double thr = -1) {
  std::vector<bool> out;
  for (const auto& r : rows) out.push_back(thr < 0 ? r[e] > 0.5 : r[e] > thr);
  return out;
}

}  // namespace

TEST_CASE("apply_thresholds is strict") {
  Thresholds t{};
  t.fill(0.5);
  CHECK(apply_thresholds({0.5, 0.51, 0.49, 1.0, 0.0, 0.5}, t) == std::vector<std::size_t>{1, 3});
  t[0] = 0.2;
  CHECK(apply_thresholds({0.3, 0, 0, 0, 0, 0}, t) == std::vector<std::size_t>{0});
}

TEST_CASE("f1_binary") {
  const bool p1[] = {true, true, false, false};
  const bool l1[] = {true, false, true, false};
  CHECK(f1_binary(p1, l1) == doctest::Approx(0.5));
  const bool none[] = {false, false};
  CHECK(f1_binary(none, none) == 0.0);
  const bool all[] = {true, true};
  CHECK(f1_binary(all, all) == 1.0);
}

TEST_CASE("calibrate small cases") {
  SUBCASE("separable column picks the smallest perfect threshold") {
    std::vector<EmotionVector> probs(4), labels(4);
    const double p[] = {0.1, 0.3, 0.7, 0.9};
    for (int i = 0; i < 4; ++i) {
      probs[i].fill(p[i]);
      labels[i].fill(i >= 2 ? 1.0 : 0.0);
    }
    const CalibrationResult r = calibrate(probs, labels);
    for (std::size_t e = 0; e < 6; ++e) {
      CHECK(r.thresholds[e] == 0.3);
      CHECK(r.best_f1[e] == 1.0);
    }
  }
  SUBCASE("grid boundary value does not count as positive") {
    std::vector<EmotionVector> probs(2), labels(2);
    probs[0].fill(0.5);
    probs[1].fill(0.2);
    labels[0].fill(1.0);
    const CalibrationResult r = calibrate(probs, labels);
    CHECK(r.thresholds[0] == 0.2);
    CHECK(r.best_f1[0] == 1.0);
  }
  SUBCASE("no positives anywhere ties at F1 zero") {
    std::vector<EmotionVector> probs(3), labels(3);
    for (auto& p : probs) p.fill(0.6);
    const CalibrationResult r = calibrate(probs, labels);
    CHECK(r.thresholds[2] == 0.01);
    CHECK(r.best_f1[2] == 0.0);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(calibrate(std::vector<EmotionVector>(2), std::vector<EmotionVector>(3)),
                    Error);
  }
}

TEST_CASE("calibrate matches exhaustive fraction search") {
  Rng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<EmotionVector> probs(n), labels(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t e = 0; e < 6; ++e) {
        // Some values sit exactly on grid points.
        probs[i][e] = rng.below(3) == 0 ? static_cast<double>(rng.below(101)) / 100.0
                                        : rng.uniform();
        labels[i][e] = rng.below(2) ? 1.0 : 0.0;
      }
    const CalibrationResult r = calibrate(probs, labels);
    for (std::size_t e = 0; e < 6; ++e) {
      std::vector<double> col;
      for (const auto& p : probs) col.push_back(p[e]);
      const oracle::GridChoice want = oracle::grid_search(col, column(labels, e));
      CHECK(r.thresholds[e] == want.k / 100.0);
      CHECK(r.best_f1[e] == doctest::Approx(want.f1.value()).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate") {
  SUBCASE("hand case") {
    // anger column: pred {1,1,0,0}, label {1,0,1,0}
    std::vector<EmotionVector> probs(4), labels(4);
    const double p[] = {0.9, 0.8, 0.1, 0.2};
    const double l[] = {1, 0, 1, 0};
    for (int i = 0; i < 4; ++i) {
      probs[i].fill(p[i]);
      labels[i].fill(l[i]);
    }
    Thresholds t{};
    t.fill(0.5);
    const EvalReport r = evaluate(probs, labels, t);
    CHECK(r.per_emotion[0].accuracy == 0.5);
    CHECK(r.per_emotion[0].f1_positive == 0.5);
    CHECK(r.per_emotion[0].f1_weighted == 0.5);
    CHECK(r.mean.accuracy == 0.5);
  }
  SUBCASE("random oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.below(40);
      std::vector<EmotionVector> probs(n), labels(n);
      Thresholds t{};
      for (double& v : t) v = static_cast<double>(1 + rng.below(99)) / 100.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < 6; ++e) {
          probs[i][e] = rng.uniform();
          labels[i][e] = rng.below(4) == 0 ? 1.0 : 0.0;
        }
      const EvalReport r = evaluate(probs, labels, t);
      double mean_acc = 0.0;
      for (std::size_t e = 0; e < 6; ++e) {
        std::vector<bool> lab;
        for (const auto& row : labels) lab.push_back(row[e] > 0.5);
        const auto want = oracle::column_metrics(column(probs, e, t[e]), lab);
        CHECK(r.per_emotion[e].accuracy == doctest::Approx(want.accuracy).epsilon(1e-12));
        CHECK(r.per_emotion[e].f1_positive == doctest::Approx(want.f1_positive).epsilon(1e-12));
        CHECK(r.per_emotion[e].f1_weighted == doctest::Approx(want.f1_weighted).epsilon(1e-12));
        mean_acc += want.accuracy;
      }
      CHECK(r.mean.accuracy == doctest::Approx(mean_acc / 6).epsilon(1e-12));
    }
  }
}

TEST_CASE("threshold file round trip") {
  test::TempDir dir;
  const Thresholds t{0.01, 0.2, 0.33, 0.5, 0.75, 0.99};
  save_thresholds(dir / "t.json", t);
  CHECK(load_thresholds(dir / "t.json") == t);
  const auto doc = nlohmann::json::parse(test::read_file(dir / "t.json"));
  CHECK(doc["emotions"][3] == "happiness");
  test::write_file(dir / "bad.json", R"({"thresholds":[0.5,0.5]})");
  CHECK_THROWS_AS(load_thresholds(dir / "bad.json"), Error);
  CHECK_THROWS_AS(load_thresholds(dir / "missing.json"), Error);
}
