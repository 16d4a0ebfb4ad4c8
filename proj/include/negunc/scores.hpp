/* Copyright 2026 The negunc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Precision, recall and F1 for binary labels.

#ifndef NEGUNC_SCORES_HPP_
#define NEGUNC_SCORES_HPP_

#include "negunc/errors.hpp"

#include <cstddef>
#include <vector>

namespace negunc {

struct PrfScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Precision/recall/F1 of class `positive`. Undefined ratios are reported
// as 0.
inline PrfScores binary_prf(const std::vector<int>& gold, const std::vector<int>& pred, int positive = 1) {
  if (gold.size() != pred.size()) throw ValidationError("binary_prf: gold and prediction lengths differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == positive, p = pred[i] == positive;
    tp += g && p;
    fp += !g && p;
    fn += g && !p;
  }
  PrfScores s;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

// Unweighted mean of the per-class scores over classes {0, 1}.
inline PrfScores macro_prf(const std::vector<int>& gold, const std::vector<int>& pred) {
  const PrfScores a = binary_prf(gold, pred, 0);
  const PrfScores b = binary_prf(gold, pred, 1);
  return {(a.precision + b.precision) / 2, (a.recall + b.recall) / 2, (a.f1 + b.f1) / 2};
}

}  // namespace negunc

#endif  // NEGUNC_SCORES_HPP_
