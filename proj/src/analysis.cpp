#include "eic/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "eic/error.hpp"
#include "eic/util.hpp"

namespace eic {

double decision_score(std::string_view decision) {
  if (decision == "reject") return 1.0;
  if (decision == "approve-with-reservations") return 2.0;
  if (decision == "approve") return 3.0;
  throw DataError("unknown review decision '" + std::string(decision) + "'");
}

int label_success(std::span<const std::string> old_scores, std::span<const std::string> new_scores) {
  if (old_scores.empty() || new_scores.empty()) throw DataError("success labelling needs review scores for both versions");
  auto mean = [](std::span<const std::string> s) {
    double sum = 0.0;
    for (const auto& d : s) sum += decision_score(d);
    return sum / double(s.size());
  };
  return mean(new_scores) > mean(old_scores) ? 1 : 0;
}

std::string Combo::name() const { return std::string(to_string(action)) + "-" + intent; }

std::vector<Combo> success_regressors() {
  return {{Action::add, "Fact/Evidence"},    {Action::add, "Claim"},           {Action::remove, "Fact/Evidence"},
          {Action::remove, "Claim"},         {Action::modify, "Grammar"},      {Action::modify, "Clarity"},
          {Action::modify, "Fact/Evidence"}, {Action::modify, "Claim"}};
}

std::vector<Combo> full_combo_grid() {
  std::vector<Combo> out;
  for (auto a : {Action::add, Action::remove, Action::modify}) {
    for (const auto& i : LabelSet::edit_intents().names()) out.push_back({a, i});
  }
  return out;
}

Eigen::VectorXd focus_vector(const AnnotatedRevision& doc, std::span<const Combo> combos) {
  if (doc.edits.empty()) throw DataError("document '" + doc.doc_id + "' has no edits; focus is undefined");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(combos.size()));
  for (const auto& e : doc.edits) {
    for (std::size_t c = 0; c < combos.size(); ++c) {
      if (e.action == combos[c].action && e.intent == combos[c].intent) v[static_cast<Eigen::Index>(c)] += 1.0;
    }
  }
  return v / double(doc.edits.size());
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z << Eigen::VectorXd::Ones(X.rows()), X;
  return Z;
}

/// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))); }

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
  return ll;
}

RegressionFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names,
                           const LogisticOptions& opts) {
  if (X.rows() != y.size()) throw DataError("regressor rows and labels differ in count");
  if (static_cast<std::size_t>(X.cols()) != names.size()) throw DataError("regressor names do not match columns");
  double positives = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic labels must be 0 or 1");
    positives += y[i];
  }
  if (positives == 0.0 || positives == double(y.size())) throw DataError("logistic regression needs both classes");
  if (!X.allFinite()) throw NumericError("regressors contain non-finite values");

  const Eigen::MatrixXd Z = with_intercept(X);
  const auto k = Z.cols();
  RegressionFit fit;
  fit.names.push_back("const");
  for (auto& n : names) fit.names.push_back(std::move(n));

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double ll = logistic_log_likelihood(Z, y, beta);
  Eigen::VectorXd grad(k);
  Eigen::MatrixXd hess(k, k);
  auto derivatives = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = Z * b;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = p[i] * (1.0 - p[i]);
    }
    grad = Z.transpose() * (y - p);
    hess = Z.transpose() * w.asDiagonal() * Z;
  };

  for (fit.iterations = 0; fit.iterations < opts.max_iterations; ++fit.iterations) {
    derivatives(beta);
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      throw NumericError("information matrix is singular (constant or duplicate regressors?)");
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double next_ll = logistic_log_likelihood(Z, y, next);
    // Near the optimum the likelihood is flat to rounding; take the full Newton step there.
    const double noise = 1e-12 * (1.0 + std::abs(ll));
    while (next_ll < ll - noise && t > 1e-10) {
      t *= 0.5;
      next = beta + t * step;
      next_ll = logistic_log_likelihood(Z, y, next);
    }
    if (next.lpNorm<Eigen::Infinity>() > opts.separation_bound) {
      throw NumericError("coefficients diverge: the classes are (quasi-)separated by the regressors");
    }
    if (next_ll < ll - noise) {
      // No ascent possible in floating point; accept if already stationary enough.
      break;
    }
    beta = next;
    ll = next_ll;
  }
  derivatives(beta);
  if (!fit.converged && grad.lpNorm<Eigen::Infinity>() < 1e-8) fit.converged = true;
  const Eigen::VectorXd fitted = (Z * beta).unaryExpr([](double e) { return sigmoid(e); });
  if ((fitted - y).lpNorm<Eigen::Infinity>() < 1e-6) {
    throw NumericError("the regressors separate the classes perfectly; coefficients are unbounded");
  }
  if (!fit.converged) {
    throw NumericError("logistic regression did not converge in " + std::to_string(opts.max_iterations) +
                       " iterations");
  }

  fit.coefficients = beta;
  fit.gradient = grad;
  fit.log_likelihood = ll;
  const Eigen::MatrixXd cov = hess.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  fit.std_errors = cov.diagonal().cwiseSqrt();
  fit.wald_p.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double z = beta[j] / fit.std_errors[j];
    fit.wald_p[j] = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  const double n = double(y.size());
  const double rate = positives / n;
  fit.null_log_likelihood = positives * std::log(rate) + (n - positives) * std::log1p(-rate);
  fit.llr = std::max(0.0, 2.0 * (fit.log_likelihood - fit.null_log_likelihood));
  fit.llr_p = chi_squared_sf(fit.llr, double(k - 1));
  return fit;
}

nlohmann::ordered_json RegressionFit::to_json() const {
  nlohmann::ordered_json j;
  auto& rows = j["coefficients"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    rows.push_back({{"name", names[i]}, {"coef", coefficients[k]}, {"std_error", std_errors[k]}, {"p_value", wald_p[k]}});
  }
  j["log_likelihood"] = log_likelihood;
  j["null_log_likelihood"] = null_log_likelihood;
  j["llr"] = llr;
  j["llr_p"] = llr_p;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["max_abs_gradient"] = gradient.lpNorm<Eigen::Infinity>();
  return j;
}

// ---------------------------------------------------------------------------
// Positions and divergence

double relative_position(const EditSample& e, const RevisionCounts& counts) {
  const bool old_side = e.action == Action::remove;
  const auto index = old_side ? e.old_index : e.new_index;
  const auto count = old_side ? counts.old_sentences : counts.sentences;
  if (!index) throw DataError("edit '" + e.edit_id + "' has no sentence index");
  if (count <= 1) return 0.0;
  return double(*index) / double(count - 1);
}

namespace {

std::string scheme_label(const EditSample& e, LabelScheme scheme) {
  if (scheme == LabelScheme::action) return std::string(to_string(*e.action));
  return e.intent.value_or("");
}

int bin_of(double pos, int bins) { return std::clamp(static_cast<int>(std::floor(pos * bins)), 0, bins - 1); }

/// Label order: known labels first in their canonical order, then others alphabetically.
std::vector<std::string> scheme_labels(LabelScheme scheme) {
  if (scheme == LabelScheme::action) return {"Add", "Delete", "Modify"};
  return LabelSet::edit_intents().names();
}

}  // namespace

std::vector<PositionHistogram> position_histogram(std::span<const AnnotatedRevision> docs, LabelScheme scheme,
                                                  int bins) {
  if (bins < 1) throw ConfigError({"position bins must be >= 1"});
  std::map<std::string, PositionHistogram> by_label;
  for (const auto& d : docs) {
    for (const auto& e : d.edits) {
      const auto label = scheme_label(e, scheme);
      if (label.empty()) continue;
      auto& h = by_label[label];
      if (h.mass.size() == 0) {
        h.label = label;
        h.mass = Eigen::VectorXd::Zero(bins);
      }
      h.mass[bin_of(relative_position(e, d.counts), bins)] += 1.0;
      ++h.count;
    }
  }
  std::vector<PositionHistogram> out;
  for (const auto& l : scheme_labels(scheme)) {
    auto it = by_label.find(l);
    if (it == by_label.end()) continue;
    out.push_back(std::move(it->second));
    by_label.erase(it);
  }
  for (auto& [_, h] : by_label) out.push_back(std::move(h));
  for (auto& h : out) h.mass /= double(h.count);
  return out;
}

double kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double epsilon) {
  if (p.size() != q.size() || p.size() == 0) throw DataError("KL needs distributions over the same non-empty support");
  if (epsilon < 0.0) throw ConfigError({"KL epsilon must be >= 0"});
  if ((p.array() < 0).any() || (q.array() < 0).any()) throw DataError("KL arguments must be non-negative");
  const Eigen::VectorXd ps = (p.array() + epsilon).matrix();
  const Eigen::VectorXd qs = (q.array() + epsilon).matrix();
  const double zp = ps.sum(), zq = qs.sum();
  if (zp <= 0.0 || zq <= 0.0) throw DataError("KL arguments must have positive mass");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double a = ps[i] / zp, b = qs[i] / zq;
    if (a == 0.0) continue;
    if (b == 0.0) return std::numeric_limits<double>::infinity();
    sum += a * std::log(a / b);
  }
  return std::max(sum, 0.0);
}

std::vector<GroupTest> group_mean_tests(std::span<const AnnotatedRevision> a, std::span<const AnnotatedRevision> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("group tests need at least two documents per group");
  auto per_doc = [](std::span<const AnnotatedRevision> docs, const std::optional<std::string>& intent) {
    std::vector<double> v;
    for (const auto& d : docs) {
      double n = 0;
      for (const auto& e : d.edits) n += !intent || e.intent == intent;
      v.push_back(n);
    }
    return v;
  };
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  std::vector<GroupTest> out;
  std::vector<std::optional<std::string>> keys;
  for (const auto& l : LabelSet::edit_intents().names()) keys.emplace_back(l);
  keys.emplace_back(std::nullopt);
  for (const auto& key : keys) {
    const auto xa = per_doc(a, key), xb = per_doc(b, key);
    GroupTest g;
    g.name = key.value_or("total");
    g.mean_a = mean(xa);
    g.mean_b = mean(xb);
    g.test = welch_t(xa, xb, Alternative::two_sided);
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Joint (label, bin) counts for one group of documents, labels in `labels` order.
Eigen::VectorXd joint_positions(const std::vector<const AnnotatedRevision*>& docs, LabelScheme scheme,
                                const std::vector<std::string>& labels, int bins) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()) * bins);
  for (const auto* d : docs) {
    for (const auto& e : d->edits) {
      const auto label = scheme_label(e, scheme);
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it == labels.end()) continue;
      const auto row = static_cast<int>(it - labels.begin());
      v[row * bins + bin_of(relative_position(e, d->counts), bins)] += 1.0;
    }
  }
  return v;
}

Eigen::VectorXd combo_counts(const std::vector<const AnnotatedRevision*>& docs, std::span<const Combo> combos) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(combos.size()));
  for (const auto* d : docs) {
    for (const auto& e : d->edits) {
      for (std::size_t c = 0; c < combos.size(); ++c) {
        if (e.action == combos[c].action && e.intent == combos[c].intent) v[static_cast<Eigen::Index>(c)] += 1.0;
      }
    }
  }
  return v;
}

}  // namespace

AnalysisReport analyze(std::span<const AnnotatedRevision> docs, const AnalysisOptions& opts) {
  if (docs.empty()) throw DataError("analysis needs at least one document");
  AnalysisReport rep;
  auto& j = rep.json;
  j["documents"] = docs.size();
  j["kl_unit"] = "nats";
  j["position_bins"] = opts.bins;

  // Revision success.
  std::vector<const AnnotatedRevision*> success, failure;
  for (const auto& d : docs) {
    if (!d.review_scores_old || !d.review_scores_new) continue;
    (label_success(*d.review_scores_old, *d.review_scores_new) ? success : failure).push_back(&d);
  }
  j["success"] = {{"scored_documents", success.size() + failure.size()},
                  {"successful", success.size()},
                  {"unsuccessful", failure.size()}};

  const auto regressors = opts.full_grid ? full_combo_grid() : success_regressors();
  {
    std::vector<const AnnotatedRevision*> rows;
    for (const auto& d : docs) {
      if (d.review_scores_old && d.review_scores_new && !d.edits.empty()) rows.push_back(&d);
    }
    std::vector<std::string> names;
    for (const auto& c : regressors) names.push_back(c.name());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(regressors.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      X.row(static_cast<Eigen::Index>(r)) = focus_vector(*rows[r], regressors).transpose();
      y[static_cast<Eigen::Index>(r)] = label_success(*rows[r]->review_scores_old, *rows[r]->review_scores_new);
    }
    try {
      const auto fit = fit_logistic(X, y, names);
      j["regression"] = fit.to_json();
      std::string csv = csv_row({"name", "coef", "std_error", "p_value"});
      for (std::size_t i = 0; i < fit.names.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        csv += csv_row({fit.names[i], num(fit.coefficients[k]), num(fit.std_errors[k]), num(fit.wald_p[k])});
      }
      rep.csv["regression.csv"] = csv;
    } catch (const Error& e) {
      j["regression"] = {{"error", e.what()}};
    }
  }

  // Groups by domain category plus "overall".
  std::vector<std::pair<std::string, std::vector<const AnnotatedRevision*>>> groups;
  for (auto cat : kAllDomains) {
    std::vector<const AnnotatedRevision*> g;
    for (const auto& d : docs) {
      if (d.domain_category == cat) g.push_back(&d);
    }
    if (!g.empty()) groups.emplace_back(std::string(to_string(cat)), std::move(g));
  }
  {
    std::vector<const AnnotatedRevision*> all;
    for (const auto& d : docs) all.push_back(&d);
    groups.emplace_back("overall", std::move(all));
  }

  // Editing focus per category (pooled proportions over the full grid).
  const auto grid = full_combo_grid();
  std::string focus_csv = csv_row({"category", "combo", "proportion"});
  auto& focus = j["focus"] = nlohmann::ordered_json::object();
  std::map<std::string, Eigen::VectorXd> focus_counts;
  for (const auto& [name, g] : groups) {
    const auto counts = combo_counts(g, grid);
    focus_counts[name] = counts;
    const double total = counts.sum();
    auto& row = focus[name] = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const double share = total > 0 ? counts[static_cast<Eigen::Index>(c)] / total : 0.0;
      row[grid[c].name()] = share;
      focus_csv += csv_row({name, grid[c].name(), num(share)});
    }
  }
  rep.csv["focus.csv"] = focus_csv;

  // Position histograms per category and scheme.
  std::string pos_csv = csv_row({"category", "scheme", "label", "bin", "mass", "count"});
  auto& positions = j["positions"] = nlohmann::ordered_json::object();
  for (const auto& [name, g] : groups) {
    std::vector<AnnotatedRevision> copy;
    for (const auto* d : g) copy.push_back(*d);
    for (auto scheme : {LabelScheme::action, LabelScheme::intent}) {
      const std::string sname = scheme == LabelScheme::action ? "action" : "intent";
      auto& out = positions[name][sname] = nlohmann::ordered_json::object();
      for (const auto& h : position_histogram(copy, scheme, opts.bins)) {
        out[h.label] = {{"count", h.count}, {"mass", to_std(h.mass)}};
        for (int b = 0; b < opts.bins; ++b) {
          pos_csv += csv_row({name, sname, h.label, std::to_string(b), num(h.mass[b]), std::to_string(h.count)});
        }
      }
    }
  }
  rep.csv["positions.csv"] = pos_csv;

  // KL matrices across categories (rows: p, columns: q).
  std::string kl_csv = csv_row({"kind", "p", "q", "kl"});
  auto& kls = j["kl"] = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, std::vector<const AnnotatedRevision*>>> cats(groups.begin(), groups.end() - 1);
  auto matrix = [&](const std::string& kind, auto&& dist) {
    std::vector<Eigen::VectorXd> ds;
    for (const auto& [_, g] : cats) ds.push_back(dist(g));
    auto& m = kls[kind] = nlohmann::ordered_json::object();
    for (std::size_t a = 0; a < cats.size(); ++a) {
      for (std::size_t b = 0; b < cats.size(); ++b) {
        double v = std::numeric_limits<double>::quiet_NaN();
        if (ds[a].sum() > 0 && ds[b].sum() > 0) v = kl(ds[a], ds[b], opts.kl_epsilon);
        m[cats[a].first][cats[b].first] = std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v);
        kl_csv += csv_row({kind, cats[a].first, cats[b].first, std::isnan(v) ? "" : num(v)});
      }
    }
  };
  matrix("action_location", [&](const auto& g) {
    return joint_positions(g, LabelScheme::action, scheme_labels(LabelScheme::action), opts.bins);
  });
  matrix("intent_location", [&](const auto& g) {
    return joint_positions(g, LabelScheme::intent, scheme_labels(LabelScheme::intent), opts.bins);
  });
  matrix("focus", [&](const auto& g) { return combo_counts(g, grid); });
  rep.csv["kl.csv"] = kl_csv;

  // Successful vs unsuccessful edit counts.
  if (success.size() >= 2 && failure.size() >= 2) {
    std::vector<AnnotatedRevision> sa, fa;
    for (const auto* d : success) sa.push_back(*d);
    for (const auto* d : failure) fa.push_back(*d);
    std::string csv = csv_row({"name", "mean_successful", "mean_unsuccessful", "t", "df", "p_value"});
    auto& rows = j["group_tests"] = nlohmann::ordered_json::array();
    try {
      for (const auto& g : group_mean_tests(sa, fa)) {
        rows.push_back({{"name", g.name},
                        {"mean_successful", g.mean_a},
                        {"mean_unsuccessful", g.mean_b},
                        {"t", g.test.statistic},
                        {"df", g.test.df.value_or(0.0)},
                        {"p_value", g.test.p_value}});
        csv += csv_row({g.name, num(g.mean_a), num(g.mean_b), num(g.test.statistic), num(g.test.df.value_or(0.0)),
                        num(g.test.p_value)});
      }
      rep.csv["group_tests.csv"] = csv;
    } catch (const Error& e) {
      j["group_tests"] = {{"error", e.what()}};
    }
  }
  return rep;
}

}  // namespace eic
