#include "deepfeat/train/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"

namespace deepfeat::train {

EvalReport compute_report(std::span<const std::size_t> actual, std::span<const std::size_t> predicted,
                          std::size_t classes) {
  if (actual.empty()) throw ArgumentError("cannot evaluate an empty split");
  if (actual.size() != predicted.size()) throw DimensionError("actual and predicted labels differ in length");
  EvalReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] >= classes || predicted[i] >= classes) throw ArgumentError("label index out of range");
    ++r.confusion[actual[i]][predicted[i]];
  }
  std::size_t correct = 0;
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.f1.assign(classes, 0.0);
  r.support.assign(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) {
    correct += r.confusion[c][c];
    std::size_t predicted_c = 0;
    for (std::size_t a = 0; a < classes; ++a) predicted_c += r.confusion[a][c];
    for (std::size_t p = 0; p < classes; ++p) r.support[c] += r.confusion[c][p];
    const double tp = static_cast<double>(r.confusion[c][c]);
    r.precision[c] = predicted_c == 0 ? 0.0 : tp / static_cast<double>(predicted_c);
    r.recall[c] = r.support[c] == 0 ? 0.0 : tp / static_cast<double>(r.support[c]);
    const double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / denom;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(actual.size());
  double sum = 0.0;
  for (double f : r.f1) sum += f;
  r.macro_f1 = classes == 0 ? 0.0 : sum / static_cast<double>(classes);
  return r;
}

Split stratified_split(std::span<const std::size_t> labels, std::size_t classes, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ArgumentError("label index out of range");
    by_class[labels[i]].push_back(i);
  }
  Rng rng(seed);
  Split s;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      throw ArgumentError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                          " samples; a stratified split needs at least 2");
    }
    rng.shuffle(std::span<std::size_t>(idx));
    // The epsilon keeps products such as 0.7 * 50 from rounding up past 35.
    auto take = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(idx.size()) - 1e-9));
    take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Split stratified_split(const data::Dataset& dataset, double ratio, std::uint64_t seed) {
  const auto labels = dataset.labels();
  return stratified_split(labels, dataset.num_classes(), ratio, seed);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("Cohen's d needs at least 2 runs per side");
  const MeanStd ma = mean_std(a);
  const MeanStd mb = mean_std(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double pooled = std::sqrt(((na - 1.0) * ma.std * ma.std + (nb - 1.0) * mb.std * mb.std) / (na + nb - 2.0));
  if (!(pooled > 0.0)) throw ArgumentError("Cohen's d is undefined: pooled variance is zero");
  return (ma.mean - mb.mean) / pooled;
}

}  // namespace deepfeat::train
