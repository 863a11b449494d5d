#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eic/autoannotate.hpp"
#include "eic/stats.hpp"

namespace eic {

/// reject = 1, approve-with-reservations = 2, approve = 3.
double decision_score(std::string_view decision);

/// 1 when the mean new-version score exceeds the old one, else 0. Throws DataError when either
/// list is empty or holds an unknown decision.
int label_success(std::span<const std::string> old_scores, std::span<const std::string> new_scores);

/// An action x intent combination, e.g. Modify-Clarity.
struct Combo {
  Action action;
  std::string intent;

  std::string name() const;
  friend bool operator==(const Combo&, const Combo&) = default;
};

/// The eight regressors of the success model.
std::vector<Combo> success_regressors();
/// Every action x intent combination (15).
std::vector<Combo> full_combo_grid();

/// Per-combo share of the document's edits. Throws DataError for documents without edits.
Eigen::VectorXd focus_vector(const AnnotatedRevision& doc, std::span<const Combo> combos);

struct RegressionFit {
  std::vector<std::string> names;  // "const" followed by regressor names
  Eigen::VectorXd coefficients;    // intercept first
  Eigen::VectorXd std_errors;
  Eigen::VectorXd wald_p;
  Eigen::VectorXd gradient;  // of the log-likelihood at the fit
  double log_likelihood = 0.0;
  double null_log_likelihood = 0.0;
  double llr = 0.0;
  double llr_p = 1.0;
  int iterations = 0;
  bool converged = false;

  nlohmann::ordered_json to_json() const;
};

struct LogisticOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  /// A coefficient beyond this magnitude is taken as a sign of separation.
  double separation_bound = 30.0;
};

/// Logistic log-likelihood of y given design X (intercept column included) and beta.
double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

/// Maximum-likelihood logistic regression with an intercept by damped Newton steps.
/// `X` holds regressors only. Throws NumericError on separation or non-convergence and
/// DataError when a class is absent or shapes disagree.
RegressionFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names,
                           const LogisticOptions& opts = {});

enum class LabelScheme { action, intent };

struct PositionHistogram {
  std::string label;
  std::size_t count = 0;
  Eigen::VectorXd mass;  // bins, sums to 1
};

/// Relative position of an edit: index / (count - 1) in the new document (old for Delete);
/// 0 for single-sentence documents.
double relative_position(const EditSample& e, const RevisionCounts& counts);

/// Per-label histograms over `bins` equal-width bins; labels without edits are absent.
std::vector<PositionHistogram> position_histogram(std::span<const AnnotatedRevision> docs, LabelScheme scheme,
                                                  int bins = 10);

/// KL(p || q) in nats after adding `epsilon` to every entry and renormalizing both.
double kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double epsilon = 1e-9);

struct GroupTest {
  std::string name;  // intent or "total"
  double mean_a = 0.0;
  double mean_b = 0.0;
  TestResult test;
};

/// Mean edits per intent (and total) per document in two groups, with Welch t-tests.
std::vector<GroupTest> group_mean_tests(std::span<const AnnotatedRevision> a, std::span<const AnnotatedRevision> b);

struct AnalysisOptions {
  int bins = 10;
  bool full_grid = false;
  double kl_epsilon = 1e-9;
};

struct AnalysisReport {
  nlohmann::ordered_json json;
  std::map<std::string, std::string> csv;  // file name -> content
};

/// Full report: success labels, regression, focus tables, position histograms, KL matrices
/// across domain categories and group tests. Documents without review scores are skipped for
/// the success analyses.
AnalysisReport analyze(std::span<const AnnotatedRevision> docs, const AnalysisOptions& opts);

}  // namespace eic
