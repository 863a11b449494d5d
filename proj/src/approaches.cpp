#include "eic/approaches.hpp"

#include <bit>
#include <cstring>

#include "eic/error.hpp"

namespace eic {

std::pair<std::optional<std::string>, bool> parse_label(std::string_view raw_output,
                                                        const LabelSet& labels) {
  std::optional<std::size_t> best_pos;
  std::optional<std::string> best;
  for (const auto& name : labels.names()) {
    const auto hits = label_occurrences(raw_output, name);
    if (hits.empty()) continue;
    // Labels are mutually non-substring, so two labels never share a start position.
    if (!best_pos || hits.front() < *best_pos) {
      best_pos = hits.front();
      best = name;
    }
  }
  return {best, best.has_value()};
}

namespace {

Prediction from_logits(Eigen::VectorXd logits, const LabelSet& labels) {
  if (logits.size() != static_cast<Eigen::Index>(labels.k())) {
    throw ModelError("head has " + std::to_string(logits.size()) + " outputs but the label set has " +
                     std::to_string(labels.k()));
  }
  Prediction p;
  p.label = labels[static_cast<std::size_t>(argmax(logits))];
  p.logits = std::move(logits);
  p.answer_included = true;
  return p;
}

}  // namespace

Prediction predict_seqc(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        const EncodedInput& input) {
  return from_logits(head(backend.encode_last(input)), labels);
}

Prediction predict_snet(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        TransformKind kind, const EditSample& sample, const InputFormat& fmt) {
  const auto [old_in, new_in] = build_siamese_inputs(sample, fmt);
  const Eigen::VectorXd o = backend.encode_last(old_in);
  const Eigen::VectorXd n = backend.encode_last(new_in);
  return from_logits(head(transform(kind, o, n)), labels);
}

Prediction predict_xnet(Backend& backend, const ClassifierHead<>& head, const LabelSet& labels,
                        TransformKind kind, const EditSample& sample, const TaskSpec& task,
                        const InputFormat& fmt) {
  const auto spans = backend.encode_spans(build_input(sample, task, fmt));
  return from_logits(head(transform(kind, spans.old_state, spans.new_state)), labels);
}

Prediction predict_gen(Backend& backend, const TaskSpec& task, const EditSample& sample,
                       const InputFormat& fmt) {
  InputFormat gen_fmt = fmt;
  gen_fmt.response_cue = true;
  Prediction p;
  p.raw_output = backend.generate(build_input(sample, task, gen_fmt), kGenerationTokens);
  auto [label, included] = parse_label(*p.raw_output, task.label_set);
  p.label = std::move(label);
  p.answer_included = included;
  return p;
}

InputFormat effective_format(const ApproachConfig& cfg) {
  InputFormat fmt = cfg.format;
  fmt.response_cue = cfg.approach == Approach::gen;
  return fmt;
}

Eigen::Index head_input_dim(const ApproachConfig& cfg, Eigen::Index d) {
  switch (cfg.approach) {
    case Approach::seqc: return d;
    case Approach::snet:
    case Approach::xnet: return d * output_blocks(cfg.transform);
    case Approach::gen: return 0;
  }
  return 0;
}

Classifier::Classifier(ApproachConfig cfg, TaskSpec task, Eigen::Index hidden_dim, std::uint64_t seed)
    : cfg_(cfg), task_(std::move(task)) {
  if (has_head()) {
    if (task_.input_arity == InputArity::single && cfg_.approach != Approach::seqc) {
      throw ConfigError({std::string(to_string(cfg_.approach)) + " needs paired inputs; task '" +
                         task_.task_id + "' is single-input"});
    }
    head_ = ClassifierHead<>(head_input_dim(cfg_, hidden_dim),
                             static_cast<Eigen::Index>(task_.label_set.k()), derive_seed(seed, "head"));
  }
}

Prediction Classifier::predict(Backend& backend, const EditSample& sample) const {
  const auto fmt = effective_format(cfg_);
  switch (cfg_.approach) {
    case Approach::gen: return predict_gen(backend, task_, sample, fmt);
    case Approach::seqc: return predict_seqc(backend, head_, task_.label_set, build_input(sample, task_, fmt));
    case Approach::snet: return predict_snet(backend, head_, task_.label_set, cfg_.transform, sample, fmt);
    case Approach::xnet:
      return predict_xnet(backend, head_, task_.label_set, cfg_.transform, sample, task_, fmt);
  }
  throw Error(ErrorKind::internal, "unknown approach");
}

std::string encode_matrix(const Eigen::MatrixXd& m) {
  static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes little-endian");
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  return base64_encode({bytes, static_cast<std::size_t>(m.size()) * sizeof(double)});
}

Eigen::MatrixXd decode_matrix(std::string_view base64, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = base64_decode(base64);
  if (rows < 0 || cols < 0 || bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double)) {
    throw ModelError("matrix payload does not match its " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " shape");
  }
  Eigen::MatrixXd m(rows, cols);
  if (!bytes.empty()) std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", encode_matrix(m)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  try {
    return decode_matrix(j.at("data").get<std::string>(), j.at("rows").get<Eigen::Index>(),
                         j.at("cols").get<Eigen::Index>());
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed matrix in checkpoint: ") + e.what());
  }
}

nlohmann::json Classifier::to_json() const {
  nlohmann::json j;
  j["approach"] = to_string(cfg_.approach);
  const bool paired = cfg_.approach == Approach::snet || cfg_.approach == Approach::xnet;
  j["transform"] = paired ? to_string(cfg_.transform) : "none";
  j["input_format"] = to_string(cfg_.format);
  j["task"] = {{"task_id", task_.task_id},
               {"input_arity", task_.input_arity == InputArity::pair ? "pair" : "single"},
               {"labels", task_.label_set.names()},
               {"instruction", task_.instruction_text}};
  if (has_head()) {
    j["head"] = {{"weight", matrix_to_json(head_.weight)}, {"bias", matrix_to_json(head_.bias)}};
  }
  return j;
}

Classifier Classifier::from_json(const nlohmann::json& j) {
  try {
    ApproachConfig cfg;
    const auto approach = parse_approach(j.at("approach").get<std::string>());
    const auto transform_name = j.at("transform").get<std::string>();
    const auto transform = transform_name == "none" ? TransformKind::diff_abs : parse_transform(transform_name);
    const auto format = parse_input_format(j.at("input_format").get<std::string>());
    if (!approach || !transform || !format) throw ModelError("checkpoint names an unknown approach setting");
    cfg.approach = *approach;
    cfg.transform = *transform;
    cfg.format = *format;

    const auto& t = j.at("task");
    TaskSpec task{t.at("task_id").get<std::string>(),
                  t.at("input_arity").get<std::string>() == "single" ? InputArity::single : InputArity::pair,
                  LabelSet(t.at("labels").get<std::vector<std::string>>()),
                  t.at("instruction").get<std::string>()};

    Classifier c(cfg, std::move(task), 0, 0);
    if (c.has_head()) {
      auto& head = c.head_;
      head.weight = matrix_from_json(j.at("head").at("weight"));
      head.bias = matrix_from_json(j.at("head").at("bias"));
      if (head.bias.size() != head.weight.rows() ||
          head.weight.rows() != static_cast<Eigen::Index>(c.task_.label_set.k())) {
        throw ModelError("checkpoint head shape does not match its label set");
      }
      head.weight_grad = Eigen::MatrixXd::Zero(head.weight.rows(), head.weight.cols());
      head.bias_grad = Eigen::VectorXd::Zero(head.bias.size());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed classifier in checkpoint: ") + e.what());
  }
}

}  // namespace eic
