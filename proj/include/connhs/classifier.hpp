#pragma once

// Downstream multinomial logistic regression and classification metrics.

#include <cmath>
#include <string>
#include <vector>

#include "connhs/error.hpp"
#include "connhs/neural.hpp"

namespace connhs {

struct LrModel {
  Matrix weights;  // classes x d
  Vector bias;     // classes

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
};

struct LrConfig {
  int epochs = 500;
  double learning_rate = 0.1;
};

// Row-wise softmax probabilities of the class scores.
inline Matrix class_probabilities(const LrModel& model, const Matrix& x) {
  Matrix z = x * model.weights.transpose();
  z.rowwise() += model.bias.transpose();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

// Full-batch gradient descent on the mean cross-entropy from a zero start.
inline LrModel train_lr(const Matrix& x, const std::vector<int>& labels, int num_classes, const LrConfig& cfg = {}) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw InputError("train_lr: row/label count mismatch");
  if (num_classes < 2) throw InputError("train_lr: need at least two classes");
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InputError("train_lr: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw InputError("train_lr: class " + std::to_string(c) + " has no examples");
    }
  }
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) throw InputError("train_lr: invalid optimizer settings");

  LrModel model{Matrix::Zero(num_classes, x.cols()), Vector::Zero(num_classes)};
  Matrix onehot = Matrix::Zero(x.rows(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) onehot(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Matrix residual = (class_probabilities(model, x) - onehot) * inv_n;
    model.weights.noalias() -= cfg.learning_rate * residual.transpose() * x;
    model.bias -= cfg.learning_rate * residual.colwise().sum().transpose();
  }
  return model;
}

// Argmax of the class scores; ties go to the lowest class index.
inline std::vector<int> predict(const LrModel& model, const Matrix& x) {
  if (x.cols() != model.dim()) throw InputError("predict: representation width differs from model");
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector scores = model.weights * x.row(i).transpose() + model.bias;
    int best = 0;
    for (Eigen::Index c = 1; c < scores.size(); ++c) {
      if (scores[c] > scores[best]) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

struct ClassMetrics {
  std::string label;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double f1 = 0.0;         // macro
  std::vector<ClassMetrics> per_class;
};

// One-vs-rest counts per class. Precision, recall and F1 are 0 when their
// denominators vanish; headline precision and F1 are macro averages.
inline MetricsReport compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth,
                                     const std::vector<std::string>& class_set) {
  if (predicted.size() != truth.size()) throw InputError("compute_metrics: length mismatch");
  const auto k = static_cast<int>(class_set.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || predicted[i] < 0 || predicted[i] >= k) {
      throw InputError("compute_metrics: label outside class set");
    }
  }
  MetricsReport rep;
  const std::size_t n = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == truth[i];
  rep.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  for (int c = 0; c < k; ++c) {
    ClassMetrics m;
    m.label = class_set[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = predicted[i] == c, t = truth[i] == c;
      m.tp += p && t;
      m.fp += p && !t;
      m.fn += !p && t;
      m.tn += !p && !t;
    }
    m.precision = m.tp + m.fp == 0 ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.tp + m.fn == 0 ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    rep.precision += m.precision;
    rep.f1 += m.f1;
    rep.per_class.push_back(m);
  }
  if (k > 0) {
    rep.precision /= k;
    rep.f1 /= k;
  }
  return rep;
}

}  // namespace connhs
