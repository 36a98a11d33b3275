#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deepfeat/data/dataset.hpp"

namespace deepfeat::train {

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  /// confusion[actual][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  double seconds = 0.0;
};

/// Accuracy, per-class precision/recall/F1 and their unweighted mean.
/// A class with no predictions and no instances contributes F1 = 0.
/// Throws ArgumentError on empty input or a label >= classes.
EvalReport compute_report(std::span<const std::size_t> actual, std::span<const std::size_t> predicted,
                          std::size_t classes);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class (ascending class id): indices in dataset order, shuffled with
/// one Rng(seed) stream, then the first ceil(ratio * n_c) go to train. The
/// train share is clamped to [1, n_c - 1] so both sides see every class.
/// Both outputs are sorted. Throws ArgumentError if a class has < 2 samples
/// or ratio is outside (0, 1).
Split stratified_split(std::span<const std::size_t> labels, std::size_t classes, double ratio, std::uint64_t seed);
Split stratified_split(const data::Dataset& dataset, double ratio = 0.7, std::uint64_t seed = 100);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
};

MeanStd mean_std(std::span<const double> values);

/// (mean_a - mean_b) / s_pooled with
/// s_pooled = sqrt(((n_a-1) s_a^2 + (n_b-1) s_b^2) / (n_a + n_b - 2)).
/// Throws ArgumentError if either side has < 2 values or s_pooled == 0.
double cohens_d(std::span<const double> a, std::span<const double> b);

}  // namespace deepfeat::train
