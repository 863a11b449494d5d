#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eic/approaches.hpp"

namespace eic {

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double air = 0.0;
  double throughput = 0.0;  // samples per second, tokenization included
  std::vector<ClassScore> per_class;
  std::size_t n = 0;

  nlohmann::ordered_json to_json() const;
};

/// Predictions without an included answer count as wrong. Throws DataError on empty or
/// mismatched input.
double accuracy(std::span<const Prediction> preds, std::span<const std::string> golds);

/// Mean F1 over the union of gold and predicted labels. Unanswered predictions are wrong but
/// do not form a class of their own.
double macro_f1(std::span<const Prediction> preds, std::span<const std::string> golds);

double air(std::span<const Prediction> preds);

/// Scores for the union of gold and predicted labels; labels of `order` come first in its order.
std::vector<ClassScore> per_class(std::span<const Prediction> preds, std::span<const std::string> golds,
                                  const LabelSet& order);

/// Gold intents of samples; throws DataError when one is missing.
std::vector<std::string> gold_labels(std::span<const EditSample> samples);

struct EvaluationRun {
  std::vector<Prediction> predictions;
  MetricsReport report;
  InvocationCounts counts;
  double seconds = 0.0;
};

/// Predicts every sample and times the loop (input construction included, model load excluded).
EvaluationRun evaluate(const Classifier& classifier, Backend& backend, std::span<const EditSample> samples);

/// Render reports as a text table: one row per named run, columns acc / m.f1 / AIR / samples/s.
std::string render_table(std::span<const std::pair<std::string, MetricsReport>> rows);

}  // namespace eic
