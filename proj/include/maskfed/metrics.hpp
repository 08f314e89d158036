// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MASKFED_METRICS_HPP_
#define MASKFED_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "maskfed/error.hpp"

namespace maskfed {

inline double Accuracy(std::span<const int> preds, std::span<const int> labels) {
  Require(!labels.empty(), ErrorCode::kEmptyInput, "accuracy of empty input");
  Require(preds.size() == labels.size(), ErrorCode::kInvalidInput,
          "accuracy inputs differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Unweighted mean of per-class F1 over `classes` classes. A class with no true
// positives, false positives or false negatives scores 0.
inline double MacroF1(std::span<const int> preds, std::span<const int> labels,
                      std::size_t classes) {
  Require(!labels.empty(), ErrorCode::kEmptyInput, "F1 of empty input");
  Require(preds.size() == labels.size(), ErrorCode::kInvalidInput,
          "F1 inputs differ in length");
  Require(classes > 0, ErrorCode::kInvalidInput, "F1 needs at least one class");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int y = labels[i];
    Require(p >= 0 && static_cast<std::size_t>(p) < classes && y >= 0 &&
                static_cast<std::size_t>(y) < classes,
            ErrorCode::kInvalidInput, "class index out of range");
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) total += 2.0 * tp[c] / static_cast<double>(denom);
  }
  return total / static_cast<double>(classes);
}

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<ReliabilityBin> bins;
};

// Equal-width bins on [0, 1], right-closed: bin b holds (b/n, (b+1)/n], with
// confidence 0 in the first bin.
inline CalibrationReport Calibration(std::span<const double> confidences,
                                     std::span<const std::uint8_t> correct,
                                     std::size_t num_bins = 10) {
  Require(!confidences.empty(), ErrorCode::kEmptyInput, "ECE of empty input");
  Require(confidences.size() == correct.size(), ErrorCode::kInvalidInput,
          "ECE inputs differ in length");
  Require(num_bins > 0, ErrorCode::kInvalidInput, "ECE needs at least one bin");
  CalibrationReport report;
  report.bins.resize(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> hit_count(num_bins, 0);
  const double n_bins = static_cast<double>(num_bins);
  for (std::size_t b = 0; b < num_bins; ++b) {
    report.bins[b].lower = static_cast<double>(b) / n_bins;
    report.bins[b].upper = static_cast<double>(b + 1) / n_bins;
  }
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    Require(c >= 0.0 && c <= 1.0, ErrorCode::kInvalidInput,
            "confidence outside [0, 1]");
    std::size_t b = 0;
    while (b + 1 < num_bins && c > report.bins[b].upper) ++b;
    ++report.bins[b].count;
    conf_sum[b] += c;
    hit_count[b] += correct[i] ? 1 : 0;
  }
  const double total = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < num_bins; ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / n;
    bin.accuracy = static_cast<double>(hit_count[b]) / n;
    report.ece += (n / total) * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return report;
}

inline double ExpectedCalibrationError(std::span<const double> confidences,
                                       std::span<const std::uint8_t> correct,
                                       std::size_t num_bins = 10) {
  return Calibration(confidences, correct, num_bins).ece;
}

// Ranks of |x| (1-based) with ties sharing the average rank.
inline std::vector<double> AverageRanks(std::span<const double> magnitudes) {
  const std::size_t n = magnitudes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return magnitudes[a] < magnitudes[b];
  });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Null distribution of W+ = sum of ranks given positive signs, when every sign
// is independently +/- with probability 1/2. Ranks may be half-integers, so
// the result is indexed by 2 W+.
inline std::vector<double> WilcoxonNullPmf(std::span<const double> ranks) {
  std::vector<std::size_t> doubled(ranks.size());
  std::size_t max_sum = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
    max_sum += doubled[i];
  }
  std::vector<double> counts(max_sum + 1, 0.0);
  counts[0] = 1.0;
  std::size_t reach = 0;
  for (std::size_t r : doubled) {
    for (std::size_t s = reach + 1; s-- > 0;) {
      if (counts[s] != 0.0) counts[s + r] += counts[s];
    }
    reach += r;
  }
  const double total = std::ldexp(1.0, static_cast<int>(ranks.size()));
  for (double& c : counts) c /= total;
  return counts;
}

struct WilcoxonResult {
  double statistic = 0.0;  // W+
  std::size_t n = 0;       // nonzero differences
  bool exact = false;
  double p_value = 1.0;    // two-sided
};

// Two-sided Wilcoxon signed-rank test on paired differences. Zeros are
// dropped; tied magnitudes share average ranks. Exact null enumeration for
// n <= 20, otherwise the normal approximation with tie and continuity
// corrections.
inline WilcoxonResult WilcoxonSignedRank(std::span<const double> differences) {
  std::vector<double> nonzero;
  for (double d : differences) {
    Require(std::isfinite(d), ErrorCode::kInvalidInput,
            "Wilcoxon difference is not finite");
    if (d != 0.0) nonzero.push_back(d);
  }
  Require(!nonzero.empty(), ErrorCode::kUndefinedTest,
          "all paired differences are zero");
  Require(nonzero.size() >= 5, ErrorCode::kInvalidInput,
          "Wilcoxon test needs at least 5 nonzero differences");
  std::vector<double> magnitudes(nonzero.size());
  for (std::size_t i = 0; i < nonzero.size(); ++i)
    magnitudes[i] = std::abs(nonzero[i]);
  const auto ranks = AverageRanks(magnitudes);

  WilcoxonResult result;
  result.n = nonzero.size();
  for (std::size_t i = 0; i < nonzero.size(); ++i) {
    if (nonzero[i] > 0.0) result.statistic += ranks[i];
  }
  const double n = static_cast<double>(result.n);
  if (result.n <= 20) {
    result.exact = true;
    const auto pmf = WilcoxonNullPmf(ranks);
    const auto w2 = static_cast<std::size_t>(std::llround(2.0 * result.statistic));
    double lower = 0.0;
    double upper = 0.0;
    for (std::size_t s = 0; s < pmf.size(); ++s) {
      if (s <= w2) lower += pmf[s];
      if (s >= w2) upper += pmf[s];
    }
    result.p_value = std::min(1.0, 2.0 * std::min(lower, upper));
    return result;
  }
  const double mean = n * (n + 1.0) / 4.0;
  double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  std::vector<double> sorted = magnitudes;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    variance -= (t * t * t - t) / 48.0;
    i = j + 1;
  }
  const double z = std::max(0.0, std::abs(result.statistic - mean) - 0.5) /
                   std::sqrt(variance);
  result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

}  // namespace maskfed

#endif  // MASKFED_METRICS_HPP_
