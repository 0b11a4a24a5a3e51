#include "dualcap/probe.hpp"

#include "dualcap/errors.hpp"

#include <cmath>

namespace dualcap {
namespace {

Matrix standardise(const Matrix& x, const RowVector& mean, const RowVector& scale) {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Matrix row_softmax(Matrix logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    logits.row(r).array() -= logits.row(r).maxCoeff();
    logits.row(r) = logits.row(r).array().exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

}  // namespace

std::vector<int> SoftmaxRegression::predict(const Matrix& features) const {
  const Matrix logits = (standardise(features, mean, scale) * weights).rowwise() + bias;
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

SoftmaxRegression fit_softmax_regression(const Matrix& features, const std::vector<int>& labels, int classes,
                                         const ProbeOptions& options) {
  if (features.rows() == 0 || static_cast<std::size_t>(features.rows()) != labels.size())
    throw DataError("probe needs one label per feature row");
  if (classes < 2) throw ConfigError("probe needs at least two classes");
  const auto n = static_cast<double>(features.rows());
  SoftmaxRegression model;
  model.mean = features.colwise().mean();
  const Matrix centred = features.rowwise() - model.mean;
  model.scale = (centred.array().square().colwise().sum() / n).sqrt().matrix();
  for (Eigen::Index c = 0; c < model.scale.size(); ++c)
    if (model.scale[c] < 1e-12) model.scale[c] = 1.0;
  const Matrix x = standardise(features, model.mean, model.scale);

  Matrix target = Matrix::Zero(features.rows(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw DataError("probe label out of range");
    target(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  model.weights = Matrix::Zero(features.cols(), classes);
  model.bias = RowVector::Zero(classes);
  for (int it = 0; it < options.iterations; ++it) {
    const Matrix probs = row_softmax((x * model.weights).rowwise() + model.bias);
    const Matrix delta = (probs - target) / n;
    model.weights -= options.lr * (x.transpose() * delta + options.l2 * model.weights);
    model.bias -= options.lr * delta.colwise().sum();
  }
  return model;
}

double accuracy(const SoftmaxRegression& model, const Matrix& features, const std::vector<int>& labels) {
  const auto predicted = model.predict(features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

RowVector mean_pool(const FeatureSeq& features) { return features.values.colwise().mean(); }

ProbeResult run_mark_probe(const SyntheticCorpusConfig& corpus, const ImageEncoder& general,
                           const ImageEncoder& detail, std::uint64_t seed, const ProbeOptions& options) {
  const int total = options.train_samples + options.test_samples;
  if (options.train_samples < 1 || options.test_samples < 1) throw ConfigError("probe sample counts must be >= 1");
  Rng rng(derive_seed(seed, "probe.scenes"));
  Matrix gen(total, general.spec().dims);
  Matrix det(total, detail.spec().dims);
  std::vector<int> labels(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const SyntheticScene scene = sample_medical_scene(corpus, rng, 1);
    const RgbImage image = render_scene(corpus, scene);
    gen.row(i) = mean_pool(encode_general(general, image));
    det.row(i) = mean_pool(encode_detail(detail, image));
    labels[static_cast<std::size_t>(i)] = scene.marks.at(0).kind;
  }
  const int classes = static_cast<int>(corpus.marks.size());
  const std::vector<int> train_labels(labels.begin(), labels.begin() + options.train_samples);
  const std::vector<int> test_labels(labels.begin() + options.train_samples, labels.end());
  auto held_out = [&](const Matrix& feats) {
    const auto model = fit_softmax_regression(feats.topRows(options.train_samples), train_labels, classes, options);
    return accuracy(model, feats.bottomRows(options.test_samples), test_labels);
  };
  return ProbeResult{held_out(gen), held_out(det), 1.0 / classes};
}

}  // namespace dualcap
