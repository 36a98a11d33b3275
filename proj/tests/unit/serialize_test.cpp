#include <charconv>
#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/llm/serialize.hpp"

using namespace deepfeat;
using namespace deepfeat::llm;

TEST_CASE("serialization examples") {
  const std::vector<double> a{1.5, 2.0, -0.25};
  CHECK(serialize_series(a) == "1.5, 2.0, -0.25");
  const std::vector<double> b{0.12345};
  CHECK(serialize_series(b) == "0.123");
  CHECK(format_value(2.0, 3) == "2.0");
  CHECK(format_value(-0.0, 3) == "0.0");
  CHECK(format_value(-0.0001, 3) == "0.0");
  CHECK(format_value(1234.5678, 2) == "1234.57");
  CHECK(format_value(7.6, 0) == "8");
  CHECK(format_value(0.0625, 3) == "0.062");  // exact tie rounds to even
}

TEST_CASE("serialization offsets and custom separator") {
  const std::vector<double> v{1.0, -22.5, 3.125};
  SerializationConfig cfg{2, " | "};
  const auto s = serialize_series_with_offsets(v, cfg);
  CHECK(s.text == "1.0 | -22.5 | 3.12");
  REQUIRE(s.value_ends.size() == 3);
  CHECK(s.text.substr(0, s.value_ends[0]) == "1.0");
  CHECK(s.value_ends[1] == std::string("1.0 | -22.5").size());
  CHECK(s.value_ends[2] == s.text.size());
}

TEST_CASE("serialization rejects bad input") {
  CHECK_THROWS_AS(serialize_series(std::vector<double>{}), ArgumentError);
  CHECK_THROWS_AS(serialize_series(std::vector<double>{1.0, NAN}), ArgumentError);
  CHECK_THROWS_AS(serialize_series(std::vector<double>{1.0}, {3, ""}), ArgumentError);
  CHECK_THROWS_AS(serialize_series(std::vector<double>{1.0}, {-1, ", "}), ArgumentError);
}

TEST_CASE("rendered values parse back within half a unit in the last place") {
  Rng rng(1);
  for (int digits = 0; digits <= 6; ++digits) {
    for (int i = 0; i < 500; ++i) {
      const double v = rng.uniform(-1000, 1000) * std::pow(10.0, rng.uniform(-3, 1));
      const std::string s = format_value(v, digits);
      double back = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), back);
      REQUIRE(r.ec == std::errc());
      CHECK(std::abs(back - v) <= 0.5 * std::pow(10.0, -digits) * (1 + 1e-9));
    }
  }
}
