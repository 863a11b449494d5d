#include "eic/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>

#include "eic/error.hpp"

namespace eic {

namespace {

void check_shapes(std::span<const Prediction> preds, std::span<const std::string> golds) {
  if (preds.empty()) throw DataError("metrics need at least one prediction");
  if (preds.size() != golds.size()) {
    throw DataError(std::to_string(preds.size()) + " predictions but " + std::to_string(golds.size()) +
                    " gold labels");
  }
}

bool correct(const Prediction& p, const std::string& gold) {
  return p.answer_included && p.label && *p.label == gold;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Confusion counts per label in first-seen order after `order`'s labels.
std::vector<std::pair<std::string, Confusion>> confusion(std::span<const Prediction> preds,
                                                         std::span<const std::string> golds,
                                                         const std::vector<std::string>& order) {
  std::vector<std::pair<std::string, Confusion>> rows;
  std::map<std::string, std::size_t> index;
  auto slot = [&](const std::string& label) -> Confusion& {
    auto [it, fresh] = index.emplace(label, rows.size());
    if (fresh) rows.emplace_back(label, Confusion{});
    return rows[it->second].second;
  };
  for (const auto& l : order) slot(l);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& gold = golds[i];
    const bool answered = preds[i].answer_included && preds[i].label;
    if (answered && *preds[i].label == gold) {
      ++slot(gold).tp;
    } else {
      ++slot(gold).fn;
      if (answered) ++slot(*preds[i].label).fp;
    }
  }
  return rows;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassScore score(const std::string& label, const Confusion& c) {
  ClassScore s;
  s.label = label;
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.recall = ratio(c.tp, c.tp + c.fn);
  s.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  s.support = c.tp + c.fn;
  return s;
}

}  // namespace

double accuracy(std::span<const Prediction> preds, std::span<const std::string> golds) {
  check_shapes(preds, golds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += correct(preds[i], golds[i]);
  return ratio(hits, preds.size());
}

double macro_f1(std::span<const Prediction> preds, std::span<const std::string> golds) {
  check_shapes(preds, golds);
  const auto rows = confusion(preds, golds, {});
  double sum = 0.0;
  for (const auto& [label, c] : rows) sum += score(label, c).f1;
  return sum / static_cast<double>(rows.size());
}

double air(std::span<const Prediction> preds) {
  if (preds.empty()) throw DataError("AIR needs at least one prediction");
  std::size_t included = 0;
  for (const auto& p : preds) included += p.answer_included;
  return ratio(included, preds.size());
}

std::vector<ClassScore> per_class(std::span<const Prediction> preds, std::span<const std::string> golds,
                                  const LabelSet& order) {
  check_shapes(preds, golds);
  std::vector<ClassScore> out;
  for (const auto& [label, c] : confusion(preds, golds, order.names())) {
    // Labels from `order` that never occur are outside the evaluation universe.
    if (c.tp + c.fp + c.fn == 0) continue;
    out.push_back(score(label, c));
  }
  return out;
}

std::vector<std::string> gold_labels(std::span<const EditSample> samples) {
  std::vector<std::string> golds;
  golds.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.intent) throw DataError("sample '" + s.edit_id + "' has no gold label");
    golds.push_back(*s.intent);
  }
  return golds;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["air"] = air;
  j["throughput"] = throughput;
  auto& rows = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : per_class) {
    rows.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall},
                    {"f1", c.f1}, {"support", c.support}});
  }
  return j;
}

EvaluationRun evaluate(const Classifier& classifier, Backend& backend, std::span<const EditSample> samples) {
  const auto golds = gold_labels(samples);
  EvaluationRun run;
  run.predictions.reserve(samples.size());
  backend.reset_counts();
  const auto start = std::chrono::steady_clock::now();
  for (const auto& s : samples) run.predictions.push_back(classifier.predict(backend, s));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.counts = backend.counts();

  auto& r = run.report;
  r.n = samples.size();
  r.accuracy = accuracy(run.predictions, golds);
  r.macro_f1 = macro_f1(run.predictions, golds);
  r.air = air(run.predictions);
  r.per_class = per_class(run.predictions, golds, classifier.task().label_set);
  r.throughput = static_cast<double>(samples.size()) / std::max(run.seconds, 1e-9);
  return run;
}

std::string render_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  std::size_t width = 5;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %12s\n", int(width), "run", "acc.", "m. f1", "AIR",
                "samples/s");
  out += buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %12.1f\n", int(width), name.c_str(),
                  100.0 * r.accuracy, 100.0 * r.macro_f1, 100.0 * r.air, r.throughput);
    out += buf;
  }
  return out;
}

}  // namespace eic
