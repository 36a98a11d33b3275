#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/train/metrics.hpp"

using namespace deepfeat;
using namespace deepfeat::train;

TEST_CASE("evaluation report") {
  SUBCASE("all correct") {
    const std::vector<std::size_t> y{0, 1, 2, 1, 0};
    const auto r = compute_report(y, y, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);
  }
  SUBCASE("balanced two classes, always predicting the first") {
    const std::vector<std::size_t> actual{0, 0, 1, 1};
    const std::vector<std::size_t> pred{0, 0, 0, 0};
    const auto r = compute_report(actual, pred, 2);
    CHECK(r.accuracy == 0.5);
    CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r.f1[1] == 0.0);
  }
  SUBCASE("a class absent from both sides contributes zero") {
    const std::vector<std::size_t> y{0, 1};
    const auto r = compute_report(y, y, 3);
    CHECK(r.macro_f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("confusion invariants on random predictions") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t c = 2 + rng.below(5);
      std::vector<std::size_t> actual(1 + rng.below(60)), pred(actual.size());
      for (auto& v : actual) v = rng.below(c);
      for (auto& v : pred) v = rng.below(c);
      const auto r = compute_report(actual, pred, c);
      std::size_t trace = 0;
      for (std::size_t i = 0; i < c; ++i) {
        trace += r.confusion[i][i];
        std::size_t row = 0;
        for (auto v : r.confusion[i]) row += v;
        CHECK(row == r.support[i]);
      }
      CHECK(r.accuracy == static_cast<double>(trace) / actual.size());
      CHECK(r.macro_f1 <= 1.0);
      CHECK(r.macro_f1 >= 0.0);
    }
  }
  SUBCASE("balanced diagonal confusion: macro-F1 equals accuracy") {
    const std::vector<std::size_t> y{0, 0, 1, 1, 2, 2};
    const auto r = compute_report(y, y, 3);
    CHECK(r.macro_f1 == r.accuracy);
  }
  CHECK_THROWS_AS(compute_report(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2), ArgumentError);
  CHECK_THROWS_AS(compute_report(std::vector<std::size_t>{0}, std::vector<std::size_t>{2}, 2), ArgumentError);
}

TEST_CASE("stratified split") {
  std::vector<std::size_t> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(0);
  for (int i = 0; i < 50; ++i) labels.push_back(1);
  const auto s = stratified_split(labels, 2, 0.7, 100);
  std::size_t train0 = 0, train1 = 0;
  for (auto i : s.train) (labels[i] == 0 ? train0 : train1)++;
  CHECK(train0 == 35);
  CHECK(train1 == 35);
  CHECK(s.test.size() == 30);
  const auto again = stratified_split(labels, 2, 0.7, 100);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(stratified_split(labels, 2, 0.7, 101).train != s.train);

  std::vector<std::size_t> all(s.train);
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  CHECK_THROWS_AS(stratified_split(std::vector<std::size_t>{0, 0, 1}, 2, 0.7, 1), ArgumentError);
  CHECK_THROWS_AS(stratified_split(labels, 2, 1.0, 1), ArgumentError);
}

TEST_CASE("cohens d") {
  const std::vector<double> a{2, 4}, b{1, 3};
  CHECK(std::abs(cohens_d(a, b) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(cohens_d(a, b) - 0.7071) < 1e-4);
  CHECK(cohens_d(a, a) == 0.0);
  CHECK_THROWS_AS(cohens_d(std::vector<double>{1, 1}, std::vector<double>{0, 0}), ArgumentError);
  CHECK_THROWS_AS(cohens_d(std::vector<double>{1}, std::vector<double>{0, 2}), ArgumentError);
  // Unequal sizes use the pooled formula.
  const std::vector<double> c{1, 2, 3, 4}, d{2, 6};
  const double sp = std::sqrt((3 * (5.0 / 3.0) + 1 * 8.0) / 4.0);
  CHECK(cohens_d(c, d) == doctest::Approx((2.5 - 4.0) / sp).epsilon(1e-14));
}

TEST_CASE("mean and sample std") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = mean_std(v);
  CHECK(m.mean == 2.5);
  CHECK(m.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(mean_std(std::vector<double>{7}).std == 0.0);
}
