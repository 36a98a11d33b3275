#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace deepfeat::llm {

struct SerializationConfig {
  int fractional_digits = 3;
  std::string separator = ", ";

  void validate() const;
};

/// Fixed-point rendering with `fractional_digits` digits (round half to even
/// on the exact binary value), trailing zeros trimmed down to one fractional
/// digit: 2 -> "2.0", 0.12345 -> "0.123". With 0 digits values render as
/// integers. Negative zero renders without a sign.
std::string format_value(double value, int fractional_digits);

struct SerializedSeries {
  std::string text;
  /// Byte offset where each value's rendering ends (before the next separator).
  std::vector<std::size_t> value_ends;
};

/// Throws ArgumentError on an empty series or a non-finite value.
SerializedSeries serialize_series_with_offsets(std::span<const double> series, const SerializationConfig& cfg);

std::string serialize_series(std::span<const double> series, const SerializationConfig& cfg = {});

}  // namespace deepfeat::llm
