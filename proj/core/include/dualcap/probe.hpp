#pragma once

// Linear read-out of mark identity from mean-pooled encoder features.

#include "dualcap/encoders.hpp"
#include "dualcap/synthetic.hpp"

#include <cstdint>
#include <vector>

namespace dualcap {

struct SoftmaxRegression {
  Matrix weights;  // dims x classes
  RowVector bias;
  RowVector mean;  // feature standardisation
  RowVector scale;

  std::vector<int> predict(const Matrix& features) const;
};

struct ProbeOptions {
  int train_samples = 1000;
  int test_samples = 1000;
  int iterations = 1000;
  double lr = 1.0;
  double l2 = 1e-4;
};

/// Full-batch gradient descent on the mean cross-entropy plus an L2 penalty.
SoftmaxRegression fit_softmax_regression(const Matrix& features, const std::vector<int>& labels, int classes,
                                         const ProbeOptions& options);

double accuracy(const SoftmaxRegression& model, const Matrix& features, const std::vector<int>& labels);

/// Mean of the feature rows.
RowVector mean_pool(const FeatureSeq& features);

struct ProbeResult {
  double general_accuracy = 0.0;
  double detail_accuracy = 0.0;
  double chance = 0.0;
};

/// Single-mark medical scenes labelled by mark kind; held-out accuracy per encoder.
ProbeResult run_mark_probe(const SyntheticCorpusConfig& corpus, const ImageEncoder& general,
                           const ImageEncoder& detail, std::uint64_t seed, const ProbeOptions& options = {});

}  // namespace dualcap
