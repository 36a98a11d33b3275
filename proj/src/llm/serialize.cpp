#include "deepfeat/llm/serialize.hpp"

#include <cmath>
#include <cstdio>

#include "deepfeat/common/error.hpp"

namespace deepfeat::llm {

void SerializationConfig::validate() const {
  if (fractional_digits < 0 || fractional_digits > 17) {
    throw ArgumentError("fractional_digits must be in [0, 17], got " + std::to_string(fractional_digits));
  }
  if (separator.empty()) throw ArgumentError("separator must be nonempty");
}

std::string format_value(double value, int fractional_digits) {
  if (!std::isfinite(value)) throw ArgumentError("cannot serialize a non-finite value");
  char buf[512];
  const int len = std::snprintf(buf, sizeof(buf), "%.*f", fractional_digits, value);
  if (len < 0 || static_cast<std::size_t>(len) >= sizeof(buf)) throw ArgumentError("value too large to serialize");
  std::string s(buf, static_cast<std::size_t>(len));
  if (fractional_digits > 0) {
    const std::size_t dot = s.find('.');
    std::size_t end = s.size();
    while (end > dot + 2 && s[end - 1] == '0') --end;
    s.resize(end);
  }
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

SerializedSeries serialize_series_with_offsets(std::span<const double> series, const SerializationConfig& cfg) {
  cfg.validate();
  if (series.empty()) throw ArgumentError("cannot serialize an empty series");
  SerializedSeries out;
  out.value_ends.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i > 0) out.text += cfg.separator;
    out.text += format_value(series[i], cfg.fractional_digits);
    out.value_ends.push_back(out.text.size());
  }
  return out;
}

std::string serialize_series(std::span<const double> series, const SerializationConfig& cfg) {
  return serialize_series_with_offsets(series, cfg).text;
}

}  // namespace deepfeat::llm
