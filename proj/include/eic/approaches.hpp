#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>
#include <json.hpp>

#include "eic/backend.hpp"
#include "eic/corpus.hpp"
#include "eic/prompting.hpp"
#include "eic/transform.hpp"
#include "eic/util.hpp"

namespace eic {

/// Linear map from u to k logits.
template <typename Scalar = double>
struct ClassifierHead {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Vec<Scalar>;

  Matrix weight;  // k x in_dim
  Vector bias;    // k
  Matrix weight_grad;
  Vector bias_grad;

  ClassifierHead() = default;

  /// Uniform in ±1/sqrt(in_dim), zero bias.
  ClassifierHead(Eigen::Index in_dim, Eigen::Index k, std::uint64_t seed)
      : weight(k, in_dim), bias(Vector::Zero(k)), weight_grad(Matrix::Zero(k, in_dim)),
        bias_grad(Vector::Zero(k)) {
    SplitMix64 rng{seed};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (Eigen::Index j = 0; j < weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = Scalar(bound * rng.symmetric());
    }
  }

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index k() const { return weight.rows(); }

  template <typename Derived>
  Vector operator()(const Eigen::MatrixBase<Derived>& u) const {
    if (u.size() != in_dim()) {
      throw ModelError("head expects " + std::to_string(in_dim()) + " inputs, got " +
                       std::to_string(u.size()));
    }
    return weight * u + bias;
  }

  /// Accumulates dL/dW, dL/db and returns dL/du.
  template <typename DerivedU, typename DerivedG>
  Vector backward(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedG>& grad_logits) {
    weight_grad.noalias() += grad_logits * u.transpose();
    bias_grad += grad_logits;
    return weight.transpose() * grad_logits;
  }
};

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

/// Softmax cross-entropy of `logits` against class `target`: (loss, dL/dlogits).
template <typename Derived>
std::pair<typename Derived::Scalar, Vec<typename Derived::Scalar>> softmax_cross_entropy(
    const Eigen::MatrixBase<Derived>& logits, Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  Vec<Scalar> p = (logits.array() - m).exp().matrix();
  const Scalar z = p.sum();
  p /= z;
  const Scalar loss = -(logits(target) - m - std::log(z));
  p(target) -= Scalar(1);
  return {loss, p};
}

struct Prediction {
  std::optional<std::string> label;
  std::optional<Eigen::VectorXd> logits;
  std::optional<std::string> raw_output;
  bool answer_included = false;
};

/// Earliest word-bounded occurrence of any label in `raw_output`; none found means no answer.
std::pair<std::optional<std::string>, bool> parse_label(std::string_view raw_output, const LabelSet& labels);

inline constexpr int kGenerationTokens = 10;

Prediction predict_seqc(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        const EncodedInput& input);
Prediction predict_snet(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        TransformKind kind, const EditSample& sample, const InputFormat& fmt);
Prediction predict_xnet(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        TransformKind kind, const EditSample& sample, const TaskSpec& task,
                        const InputFormat& fmt);
Prediction predict_gen(Backend& backend, const TaskSpec& task, const EditSample& sample,
                       const InputFormat& fmt);

/// Which approach, transform and input format a classifier uses.
struct ApproachConfig {
  Approach approach = Approach::seqc;
  TransformKind transform = TransformKind::diff_abs;
  InputFormat format{};

  friend bool operator==(const ApproachConfig&, const ApproachConfig&) = default;
};

/// Input format actually rendered: Gen always adds the response cue.
InputFormat effective_format(const ApproachConfig& cfg);

/// Width of u for the approach at hidden size d (d for SeqC; transform output otherwise).
Eigen::Index head_input_dim(const ApproachConfig& cfg, Eigen::Index d);

/// An approach bound to a task: owns the head (absent for Gen).
class Classifier {
 public:
  Classifier(ApproachConfig cfg, TaskSpec task, Eigen::Index hidden_dim, std::uint64_t seed);

  const ApproachConfig& config() const noexcept { return cfg_; }
  const TaskSpec& task() const noexcept { return task_; }
  ClassifierHead<>& head() noexcept { return head_; }
  const ClassifierHead<>& head() const noexcept { return head_; }
  bool has_head() const noexcept { return cfg_.approach != Approach::gen; }

  Prediction predict(Backend& backend, const EditSample& sample) const;

  /// Head weights, transform, approach, input format and label set.
  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);

 private:
  ApproachConfig cfg_;
  TaskSpec task_;
  ClassifierHead<> head_;
};

/// Raw little-endian doubles as base64.
std::string encode_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_matrix(std::string_view base64, Eigen::Index rows, Eigen::Index cols);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace eic
