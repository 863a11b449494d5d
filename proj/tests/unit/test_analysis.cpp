#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "eic/analysis.hpp"
#include "eic/error.hpp"

using namespace eic;

namespace {

EditSample edit(Action a, std::string intent, int old_index, int new_index) {
  EditSample e;
  e.action = a;
  e.intent = std::move(intent);
  if (a != Action::add) {
    e.old_index = old_index;
    e.old_text = "old";
  }
  if (a != Action::remove) {
    e.new_index = new_index;
    e.new_text = "new";
  }
  return e;
}

AnnotatedRevision doc(std::string id, DomainCategory cat, std::vector<EditSample> edits, int n_sentences = 11) {
  AnnotatedRevision d;
  d.doc_id = std::move(id);
  d.domain_category = cat;
  d.edits = std::move(edits);
  d.counts = {100, static_cast<std::size_t>(n_sentences), static_cast<std::size_t>(n_sentences), d.edits.size()};
  return d;
}

/// Documents whose success odds rise with their share of Add-Claim edits.
std::vector<AnnotatedRevision> regression_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AnnotatedRevision> out;
  const auto regs = full_combo_grid();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<EditSample> edits;
    const int k = 4 + static_cast<int>(rng() % 6);
    double claim = 0;
    for (int e = 0; e < k; ++e) {
      const auto& c = regs[rng() % regs.size()];
      edits.push_back(edit(c.action, c.intent, e, e));
      claim += c.action == Action::add && c.intent == "Claim";
    }
    const double z = -0.5 + 4.0 * claim / k;
    const bool success = std::uniform_real_distribution<>(0, 1)(rng) < 1 / (1 + std::exp(-z));
    auto d = doc("d" + std::to_string(i), kAllDomains[i % std::size(kAllDomains)], edits);
    d.review_scores_old = std::vector<std::string>{"reject"};
    d.review_scores_new = std::vector<std::string>{success ? "approve" : "reject"};
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST_CASE("success labels compare mean review decisions") {
  using V = std::vector<std::string>;
  CHECK(decision_score("reject") == 1);
  CHECK(decision_score("approve-with-reservations") == 2);
  CHECK(decision_score("approve") == 3);
  CHECK(label_success(V{"reject"}, V{"approve"}) == 1);
  CHECK(label_success(V{"approve", "reject"}, V{"approve-with-reservations", "approve-with-reservations"}) == 0);
  CHECK(label_success(V{"approve"}, V{"reject", "approve", "approve"}) == 0);
  CHECK(label_success(V{"reject", "reject"}, V{"approve-with-reservations"}) == 1);
  CHECK_THROWS_AS(label_success(V{}, V{"approve"}), DataError);
  CHECK_THROWS_AS(label_success(V{"maybe"}, V{"approve"}), DataError);
}

TEST_CASE("focus vectors are per-document shares") {
  const auto d = doc("d", DomainCategory::nlp,
                     {edit(Action::modify, "Clarity", 0, 0), edit(Action::modify, "Clarity", 1, 1),
                      edit(Action::add, "Claim", 0, 2), edit(Action::modify, "Other", 3, 3)});
  const auto regs = success_regressors();
  const auto f = focus_vector(d, regs);
  REQUIRE(f.size() == 8);
  const auto at = [&](Action a, const char* i) {
    return f(std::find(regs.begin(), regs.end(), Combo{a, i}) - regs.begin());
  };
  CHECK(at(Action::modify, "Clarity") == doctest::Approx(0.5));
  CHECK(at(Action::add, "Claim") == doctest::Approx(0.25));
  CHECK(f.sum() == doctest::Approx(0.75));
  const auto grid = full_combo_grid();
  CHECK(grid.size() == 15);
  CHECK(focus_vector(d, grid).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(focus_vector(doc("e", DomainCategory::nlp, {}), regs), DataError);
  CHECK(Combo{Action::modify, "Clarity"}.name() == "Modify-Clarity");
}

TEST_CASE("logistic regression recovers a known slope") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  const int n = 5000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = g(rng);
    const double p = 1 / (1 + std::exp(-(0.5 + 2.0 * X(i, 0))));
    y(i) = std::uniform_real_distribution<>(0, 1)(rng) < p;
  }
  const auto fit = fit_logistic(X, y, {"x"});
  CHECK(fit.converged);
  CHECK(fit.names == std::vector<std::string>{"const", "x"});
  CHECK(std::abs(fit.coefficients(1) - 2.0) < 0.15);
  CHECK(std::abs(fit.coefficients(0) - 0.5) < 0.15);
  CHECK(fit.gradient.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit.llr >= 0);
  CHECK(fit.llr_p < 1e-6);
  CHECK(fit.wald_p(1) < 1e-6);
  CHECK(fit.std_errors(1) > 0);

  Eigen::MatrixXd design(n, 2);
  design << Eigen::VectorXd::Ones(n), X;
  CHECK(fit.log_likelihood == doctest::Approx(logistic_log_likelihood(design, y, fit.coefficients)));
  const double ybar = y.mean();
  CHECK(fit.null_log_likelihood == doctest::Approx(n * (ybar * std::log(ybar) + (1 - ybar) * std::log(1 - ybar))));
  CHECK(fit.llr == doctest::Approx(2 * (fit.log_likelihood - fit.null_log_likelihood)));
  for (double step : {-0.05, 0.05}) {
    Eigen::VectorXd moved = fit.coefficients;
    moved(1) += step;
    CHECK(logistic_log_likelihood(design, y, moved) < fit.log_likelihood);
  }
}

TEST_CASE("logistic regression converges on noise-only designs") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd X(200, 3);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
      for (int c = 0; c < 3; ++c) X(i, c) = g(rng);
      y(i) = std::uniform_real_distribution<>(0, 1)(rng) < 0.4;
    }
    const auto fit = fit_logistic(X, y, {"a", "b", "c"});
    CHECK(fit.converged);
    CHECK(fit.llr >= 0);
  }
}

TEST_CASE("logistic regression refuses degenerate data") {
  Eigen::MatrixXd X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(fit_logistic(X, y, {"x"}), NumericError);
  CHECK_THROWS_AS(fit_logistic(X, Eigen::VectorXd::Ones(6), {"x"}), DataError);
  CHECK_THROWS_AS(fit_logistic(X, Eigen::VectorXd::Ones(5), {"x"}), DataError);
}

TEST_CASE("KL divergence worked example and asymmetry") {
  Eigen::VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 0.25, 0.75;
  CHECK(kl(p, q, 0) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3)));
  CHECK(kl(p, q, 0) != doctest::Approx(kl(q, p, 0)));
  CHECK(kl(p, p) == doctest::Approx(0.0));
  Eigen::VectorXd z(2);
  z << 1, 0;
  CHECK(std::isfinite(kl(p, z, 1e-9)));
  const double e = 1e-9;
  const double pe = (0.5 + e) / (1 + 2 * e), z0 = (1 + e) / (1 + 2 * e), z1 = e / (1 + 2 * e);
  CHECK(kl(p, z, e) == doctest::Approx(pe * std::log(pe / z0) + pe * std::log(pe / z1)));
}

TEST_CASE("relative positions") {
  const RevisionCounts c{50, 11, 21, 0};
  CHECK(relative_position(edit(Action::add, "Claim", 0, 5), c) == doctest::Approx(0.5));
  CHECK(relative_position(edit(Action::remove, "Claim", 5, 0), c) == doctest::Approx(0.25));
  CHECK(relative_position(edit(Action::modify, "Claim", 0, 10), c) == doctest::Approx(1.0));
  CHECK(relative_position(edit(Action::add, "Claim", 0, 0), RevisionCounts{1, 1, 1, 1}) == 0.0);
}

TEST_CASE("position histograms are distributions independent of document order") {
  std::vector<AnnotatedRevision> docs;
  std::mt19937_64 rng(4);
  const auto names = LabelSet::edit_intents().names();
  for (int i = 0; i < 30; ++i) {
    std::vector<EditSample> edits;
    for (int e = 0; e < 5; ++e) {
      const int pos = static_cast<int>(rng() % 11);
      edits.push_back(edit(rng() % 2 ? Action::add : Action::modify, names[rng() % 4], pos, pos));
    }
    docs.push_back(doc("d" + std::to_string(i), DomainCategory::nlp, edits));
  }
  for (auto scheme : {LabelScheme::action, LabelScheme::intent}) {
    const auto h = position_histogram(docs, scheme, 10);
    std::size_t total = 0;
    for (const auto& x : h) {
      CHECK(x.mass.size() == 10);
      CHECK(x.mass.sum() == doctest::Approx(1.0));
      CHECK(x.mass.minCoeff() >= 0);
      total += x.count;
    }
    CHECK(total == 150);
    auto shuffled = docs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto h2 = position_histogram(shuffled, scheme, 10);
    REQUIRE(h2.size() == h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(h2[i].label == h[i].label);
      CHECK(h2[i].mass.isApprox(h[i].mass, 1e-15));
    }
  }
  for (const auto& x : position_histogram(docs, LabelScheme::action, 10)) CHECK(x.label != "Delete");
}

TEST_CASE("group tests compare per-document edit counts") {
  std::vector<AnnotatedRevision> a, b;
  for (int i = 0; i < 40; ++i) {
    std::vector<EditSample> few(static_cast<std::size_t>(2 + i % 3), edit(Action::modify, "Clarity", 0, 0));
    std::vector<EditSample> many(static_cast<std::size_t>(8 + i % 3), edit(Action::modify, "Clarity", 0, 0));
    a.push_back(doc("a" + std::to_string(i), DomainCategory::nlp, few));
    b.push_back(doc("b" + std::to_string(i), DomainCategory::nlp, many));
  }
  const auto same = group_mean_tests(a, a);
  const auto diff = group_mean_tests(a, b);
  const auto find = [](const std::vector<GroupTest>& ts, const std::string& name) {
    return *std::find_if(ts.begin(), ts.end(), [&](const GroupTest& t) { return t.name == name; });
  };
  CHECK(find(same, "total").test.p_value == doctest::Approx(1.0));
  const auto total = find(diff, "total");
  CHECK(total.mean_a == doctest::Approx(2.975));
  CHECK(total.mean_b == doctest::Approx(8.975));
  CHECK(total.test.p_value < 0.01);
  CHECK(find(diff, "Clarity").test.p_value < 0.01);
}

TEST_CASE("full analysis report") {
  const auto docs = regression_corpus(600, 8);
  const auto rep = analyze(docs, {});
  for (const auto* key : {"regression", "focus", "positions", "kl", "group_tests"}) CHECK(rep.json.contains(key));
  for (const auto* f : {"regression.csv", "focus.csv", "positions.csv", "kl.csv"}) CHECK(rep.csv.count(f));
  const auto& coefs = rep.json["regression"]["coefficients"];
  REQUIRE(coefs.size() == 9);
  double add_claim = 0;
  for (const auto& c : coefs) {
    if (c["name"] == "Add-Claim") add_claim = c["coef"].get<double>();
  }
  CHECK(add_claim > 1.0);
  AnalysisOptions full;
  full.full_grid = true;
  // Shares over the full grid sum to one, so the design is collinear with the intercept.
  CHECK(analyze(docs, full).json["regression"].contains("error"));
}
