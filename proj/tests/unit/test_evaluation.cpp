#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "eic/error.hpp"
#include "eic/evaluation.hpp"
#include "eic/stats.hpp"
#include "eic/stub_backend.hpp"
#include "golden.hpp"

using namespace eic;

namespace {

Prediction said(std::optional<std::string> label) {
  Prediction p;
  p.answer_included = label.has_value();
  p.label = std::move(label);
  return p;
}

// Counts straight from the definitions.
double oracle_macro_f1(const std::vector<Prediction>& preds, const std::vector<std::string>& golds) {
  std::set<std::string> labels(golds.begin(), golds.end());
  for (const auto& p : preds) {
    if (p.answer_included) labels.insert(*p.label);
  }
  double sum = 0;
  for (const auto& l : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const bool said_l = preds[i].answer_included && *preds[i].label == l;
      if (said_l && golds[i] == l) ++tp;
      if (said_l && golds[i] != l) ++fp;
      if (!said_l && golds[i] == l) ++fn;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0;
    sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
  }
  return sum / static_cast<double>(labels.size());
}

// Upper-tail probability of W+ by enumerating every sign assignment of the ranks.
double oracle_wilcoxon(std::vector<double> d) {
  std::erase(d, 0.0);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      below += std::abs(d[j]) < std::abs(d[i]);
      equal += std::abs(d[j]) == std::abs(d[i]);
    }
    rank[i] = below + (equal + 1) / 2;
  }
  double observed = 0;
  for (std::size_t i = 0; i < n; ++i) observed += d[i] > 0 ? rank[i] : 0;
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) w += (mask >> i & 1) ? rank[i] : 0;
    hits += w >= observed - 1e-9;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

}  // namespace

TEST_CASE("two-class all-A predictions") {
  const std::vector<Prediction> preds = {said("A"), said("A")};
  const std::vector<std::string> golds = {"A", "B"};
  CHECK(accuracy(preds, golds) == doctest::Approx(0.5));
  CHECK(macro_f1(preds, golds) == doctest::Approx(1.0 / 3));
}

TEST_CASE("answer inclusion rate counts answered outputs") {
  const std::vector<Prediction> preds = {said("A"), said(std::nullopt), said("B")};
  CHECK(air(preds) == doctest::Approx(2.0 / 3));
  const std::vector<std::string> golds = {"A", "B", "B"};
  CHECK(accuracy(preds, golds) == doctest::Approx(2.0 / 3));
}

TEST_CASE("metrics agree with a brute-force oracle") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<Prediction> preds;
    std::vector<std::string> golds;
    for (std::size_t i = 0; i < n; ++i) {
      golds.push_back(names[rng() % 3]);
      preds.push_back(rng() % 7 == 0 ? said(std::nullopt) : said(names[rng() % 4]));
    }
    double correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += preds[i].answer_included && *preds[i].label == golds[i];
    CHECK(accuracy(preds, golds) == doctest::Approx(correct / double(n)));
    CHECK(macro_f1(preds, golds) == doctest::Approx(oracle_macro_f1(preds, golds)));
    const auto pc = per_class(preds, golds, LabelSet({"a", "b", "c", "d"}));
    double mean = 0;
    for (const auto& c : pc) mean += c.f1;
    CHECK(mean / double(pc.size()) == doctest::Approx(macro_f1(preds, golds)));
  }
}

TEST_CASE("metric inputs are validated") {
  const std::vector<Prediction> one = {said("A")};
  const std::vector<std::string> two = {"A", "B"};
  CHECK_THROWS_AS(accuracy(one, two), DataError);
  CHECK_THROWS_AS(accuracy({}, {}), DataError);
  EditSample s;
  CHECK_THROWS_AS(gold_labels(std::vector<EditSample>{s}), DataError);
}

TEST_CASE("evaluation runs the classifier and times the loop") {
  const auto& task = find_task("eic");
  StubBackend stub;
  stub.set_responder([](const EncodedInput&) { return std::string("Claim"); });
  Classifier clf({Approach::gen, TransformKind::diff_abs, *parse_input_format("natural")}, task, 32, 1);
  std::vector<EditSample> xs(4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i].edit_id = "e" + std::to_string(i);
    xs[i].new_text = "text";
    xs[i].intent = i < 3 ? "Claim" : "Other";
  }
  const auto run = evaluate(clf, stub, xs);
  CHECK(run.report.n == 4);
  CHECK(run.report.accuracy == doctest::Approx(0.75));
  CHECK(run.report.air == doctest::Approx(1.0));
  CHECK(run.counts.decode_steps == 4 * kGenerationTokens);
  CHECK(run.report.throughput > 0);
  CHECK(run.report.to_json().contains("per_class"));
}

TEST_CASE("report tables") {
  MetricsReport a;
  a.accuracy = 0.8125;
  a.macro_f1 = 0.5;
  a.air = 1;
  a.throughput = 123.45;
  MetricsReport b = a;
  b.air = 0.25;
  const std::vector<std::pair<std::string, MetricsReport>> rows = {{"seqc", a}, {"gen-zero-shot", b}};
  check_golden("table.txt", render_table(rows));
}

TEST_CASE("special functions match tabulated quantiles") {
  CHECK(normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(normal_cdf(0) == doctest::Approx(0.5));
  struct Q {
    double df, t, p;
  };
  for (const auto& q : {Q{1, 12.706, 0.975}, Q{2, 4.303, 0.975}, Q{5, 2.015, 0.95}, Q{5, 2.571, 0.975},
                        Q{10, 1.812, 0.95}, Q{10, 3.169, 0.995}, Q{30, 2.042, 0.975}, Q{120, 1.658, 0.95}}) {
    CHECK(std::abs(student_t_cdf(q.t, q.df) - q.p) < 1e-3);
    CHECK(std::abs(student_t_cdf(-q.t, q.df) - (1 - q.p)) < 1e-3);
  }
  CHECK(std::abs(chi_squared_sf(3.841, 1) - 0.05) < 1e-3);
  CHECK(std::abs(chi_squared_sf(9.488, 4) - 0.05) < 1e-3);
  CHECK(std::abs(chi_squared_sf(6.635, 1) - 0.01) < 1e-3);
  CHECK(regularized_incomplete_beta(2, 3, 0.4) == doctest::Approx(0.5248).epsilon(1e-9));
  CHECK(regularized_gamma_p(1, 2) == doctest::Approx(1 - std::exp(-2.0)).epsilon(1e-10));
  CHECK(regularized_gamma_p(3, 2) + regularized_gamma_q(3, 2) == doctest::Approx(1.0));
  CHECK(log_beta(2, 3) == doctest::Approx(std::log(1.0 / 12)));
}

TEST_CASE("paired t test edge cases and monotonicity") {
  const std::vector<double> xs = {0.7, 0.8, 0.75, 0.9};
  const auto same = paired_t_one_sided(xs, xs);
  CHECK(same.statistic == 0);
  CHECK(same.p_value == doctest::Approx(0.5));
  std::vector<double> shifted = xs;
  for (auto& v : shifted) v += 0.1;
  CHECK_THROWS_AS(paired_t_one_sided(shifted, xs), NumericError);
  CHECK_THROWS_AS(paired_t_one_sided(std::vector<double>{1}, std::vector<double>{0}), NumericError);

  const std::vector<double> ys = {0.6, 0.75, 0.8, 0.7};
  double last = 1.0;
  for (double shift : {0.0, 0.02, 0.05, 0.1, 0.2}) {
    std::vector<double> up = xs;
    for (auto& v : up) v += shift;
    const auto r = paired_t_one_sided(up, ys);
    CHECK(r.p_value < last);
    CHECK(*r.df == 3);
    last = r.p_value;
  }
}

TEST_CASE("exact Wilcoxon matches full enumeration") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 11;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(rng() % 9) / 4;
      ys[i] = static_cast<double>(rng() % 9) / 4;
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = xs[i] - ys[i];
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0; })) {
      CHECK_THROWS_AS(wilcoxon_signed_rank_one_sided(xs, ys), NumericError);
      continue;
    }
    CHECK(wilcoxon_signed_rank_one_sided(xs, ys).p_value == doctest::Approx(oracle_wilcoxon(d)).epsilon(1e-12));
  }
  const std::vector<double> all_up = {1, 2, 3, 4, 5};
  const std::vector<double> zero(5, 0.0);
  CHECK(wilcoxon_signed_rank_one_sided(all_up, zero).p_value == doctest::Approx(1.0 / 32));
  CHECK_THROWS_AS(wilcoxon_signed_rank_one_sided(std::vector<double>{1}, std::vector<double>{0}), NumericError);
}

TEST_CASE("large-sample Wilcoxon approaches the exact tail") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.3, 1.0);
  std::vector<double> xs(40), ys(40, 0.0);
  for (auto& x : xs) x = g(rng);
  const auto r = wilcoxon_signed_rank_one_sided(xs, ys);
  CHECK(r.p_value > 0);
  CHECK(r.p_value < 0.5);
}

TEST_CASE("Welch test") {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const auto same = welch_t(a, a);
  CHECK(same.p_value == doctest::Approx(1.0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> x(50), y(50);
  for (auto& v : x) v = g(rng);
  for (auto& v : y) v = g(rng) + 2;
  CHECK(welch_t(x, y).p_value < 0.01);
  CHECK(welch_t(y, x, Alternative::greater).p_value < 0.01);
  CHECK(welch_t(x, y, Alternative::greater).p_value > 0.99);
  const auto one = one_sample_t(std::vector<double>{1.1, 0.9, 1.2, 1.0}, 0.0);
  CHECK(one.p_value < 0.001);
}
