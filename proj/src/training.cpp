#include "eic/training.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "eic/error.hpp"
#include "eic/util.hpp"

namespace eic {

double effective_learning_rate(const OptimizerConfig& opt, FinetuneMode mode) {
  if (opt.learning_rate > 0.0) return opt.learning_rate;
  return mode == FinetuneMode::adapter ? 2e-4 : 2e-5;
}

void validate(const TrainConfig& cfg) {
  std::vector<std::string> v;
  try {
    validate(cfg.finetune);
  } catch (const ConfigError& e) {
    v = e.violations();
  }
  const auto& o = cfg.optimizer;
  if (o.learning_rate < 0.0 || !std::isfinite(o.learning_rate)) v.push_back("learning_rate must be >= 0");
  if (o.batch_size < 1) v.push_back("batch_size must be >= 1");
  if (o.warmup_fraction < 0.0 || o.warmup_fraction > 1.0) v.push_back("warmup_fraction must be in [0, 1]");
  if (o.beta1 < 0.0 || o.beta1 >= 1.0) v.push_back("beta1 must be in [0, 1)");
  if (o.beta2 < 0.0 || o.beta2 >= 1.0) v.push_back("beta2 must be in [0, 1)");
  if (o.epsilon <= 0.0) v.push_back("epsilon must be > 0");
  if (!v.empty()) throw ConfigError(std::move(v));
}

int select_epoch(const std::vector<EpochRecord>& trace, SelectionMetric metric) {
  if (trace.empty()) throw Error(ErrorKind::internal, "no epochs to select from");
  auto key = [metric](const EpochRecord& r) {
    return metric == SelectionMetric::macro_f1 ? std::pair{r.val_macro_f1, r.val_accuracy}
                                               : std::pair{r.val_accuracy, r.val_macro_f1};
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (key(trace[i]) > key(trace[best])) best = i;
  }
  return trace[best].epoch;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json finetune_json(const FinetuneConfig& f) {
  return {{"mode", f.mode == FinetuneMode::full ? "full" : "adapter"},
          {"adapter_rank", f.adapter_rank},
          {"adapter_alpha", f.adapter_alpha},
          {"adapter_dropout", f.adapter_dropout},
          {"epochs", f.epochs},
          {"seed", f.seed}};
}

FinetuneConfig finetune_from_json(const nlohmann::json& j) {
  FinetuneConfig f;
  f.mode = j.at("mode").get<std::string>() == "full" ? FinetuneMode::full : FinetuneMode::adapter;
  f.adapter_rank = j.at("adapter_rank").get<int>();
  f.adapter_alpha = j.at("adapter_alpha").get<int>();
  f.adapter_dropout = j.at("adapter_dropout").get<double>();
  f.epochs = j.at("epochs").get<int>();
  f.seed = j.at("seed").get<std::uint64_t>();
  return f;
}

nlohmann::json config_json(const TrainConfig& cfg) {
  const auto& o = cfg.optimizer;
  return {{"approach", to_string(cfg.approach.approach)},
          {"transform", to_string(cfg.approach.transform)},
          {"input_format", to_string(cfg.approach.format)},
          {"finetune", finetune_json(cfg.finetune)},
          {"optimizer",
           {{"learning_rate", effective_learning_rate(o, cfg.finetune.mode)},
            {"batch_size", o.batch_size},
            {"warmup_fraction", o.warmup_fraction},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"epsilon", o.epsilon}}},
          {"selection", cfg.selection == SelectionMetric::macro_f1 ? "macro_f1" : "accuracy"}};
}

nlohmann::json record_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_accuracy", r.val_accuracy},
          {"val_macro_f1", r.val_macro_f1},
          {"val_air", r.val_air}};
}

EpochRecord record_from_json(const nlohmann::json& j) {
  return {j.at("epoch").get<int>(), j.at("train_loss").get<double>(), j.at("val_accuracy").get<double>(),
          j.at("val_macro_f1").get<double>(), j.at("val_air").get<double>()};
}

}  // namespace

nlohmann::json to_json(const TinyEncoder::Options& opts) {
  auto vocab = opts.output_vocab;
  if (!vocab.empty() && vocab.back() == TinyEncoder::kEndToken) vocab.pop_back();
  return {{"dim", opts.dim},
          {"buckets", opts.buckets},
          {"arch", to_string(opts.arch)},
          {"max_context", opts.max_context},
          {"seed", opts.seed},
          {"projection", opts.projection},
          {"output_vocab", vocab}};
}

TinyEncoder::Options tiny_options_from_json(const nlohmann::json& j) {
  TinyEncoder::Options o;
  o.dim = j.at("dim").get<int>();
  o.buckets = j.at("buckets").get<int>();
  const auto arch = j.at("arch").get<std::string>();
  bool known = false;
  for (auto a : {Architecture::encoder_only, Architecture::decoder_only, Architecture::encoder_decoder}) {
    if (to_string(a) == arch) {
      o.arch = a;
      known = true;
    }
  }
  if (!known) throw ModelError("unknown architecture '" + arch + "' in checkpoint");
  o.max_context = j.at("max_context").get<std::size_t>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.projection = j.at("projection").get<bool>();
  o.output_vocab = j.at("output_vocab").get<std::vector<std::string>>();
  return o;
}

nlohmann::json seal_checkpoint(nlohmann::json payload) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["checksum"] = hex64(fnv1a64(payload.dump()));
  doc["payload"] = std::move(payload);
  return doc;
}

nlohmann::json open_checkpoint(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("format_version") || !doc.contains("payload") ||
      !doc.contains("checksum")) {
    throw ModelError("not a checkpoint document");
  }
  if (doc["format_version"] != kCheckpointVersion) {
    throw ModelError("unsupported checkpoint format_version " + doc["format_version"].dump());
  }
  if (doc["checksum"] != hex64(fnv1a64(doc["payload"].dump()))) {
    throw ModelError("checkpoint checksum mismatch (file is corrupt)");
  }
  return doc["payload"];
}

nlohmann::json read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ModelError("checkpoint not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error&) {
    throw ModelError("checkpoint is not valid JSON (file is corrupt): " + path.string());
  }
  return open_checkpoint(doc);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  return dir / ("epoch-" + std::to_string(epoch)) / "checkpoint.json";
}

namespace {

void restore_params(const nlohmann::json& saved, std::vector<ParamRef>& params) {
  for (auto& p : params) {
    if (!saved.contains(p.name)) continue;
    const auto m = matrix_from_json(saved[p.name]);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw ModelError("checkpoint parameter '" + p.name + "' has the wrong shape");
    }
    p.value = m;
  }
}

}  // namespace

Classifier restore(const nlohmann::json& payload, TrainableBackend& backend) {
  try {
    backend.apply_finetune_config(finetune_from_json(payload.at("finetune")));
    auto params = backend.parameters();
    restore_params(payload.at("params"), params);
    return Classifier::from_json(payload.at("classifier"));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed checkpoint: ") + e.what());
  }
}

std::pair<std::unique_ptr<TinyEncoder>, Classifier> load_tiny_checkpoint(const nlohmann::json& payload) {
  try {
    const auto& b = payload.at("backend");
    if (b.at("kind") != "tiny") throw ModelError("checkpoint backend is not the tiny encoder");
    auto enc = std::make_unique<TinyEncoder>(tiny_options_from_json(b.at("options")));
    auto clf = restore(payload, *enc);
    return {std::move(enc), std::move(clf)};
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct AdamSlot {
  Eigen::MatrixXd m, v;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const TaskSpec& task, const DatasetSplit& data, TrainableBackend& backend)
      : cfg_(cfg), task_(task), data_(data), backend_(backend),
        classifier_(cfg.approach, task, backend.info().hidden_dim, cfg.finetune.seed) {
    validate(cfg_);
    if (data_.train.empty()) throw DataError("training split is empty");
    if (data_.validation.empty()) throw DataError("validation split is empty");
    gold_labels(data_.train);
    backend_.apply_finetune_config(cfg_.finetune);
    fmt_ = effective_format(cfg_.approach);
    lr_ = effective_learning_rate(cfg_.optimizer, cfg_.finetune.mode);
    const auto bs = static_cast<std::size_t>(cfg_.optimizer.batch_size);
    steps_per_epoch_ = (data_.train.size() + bs - 1) / bs;
    const auto total = steps_per_epoch_ * static_cast<std::size_t>(cfg_.finetune.epochs);
    warmup_ = static_cast<std::size_t>(std::ceil(cfg_.optimizer.warmup_fraction * double(total)));
  }

  TrainResult run(int first_epoch) {
    for (int epoch = first_epoch; epoch <= cfg_.finetune.epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = train_epoch(epoch);
      backend_.set_training(false, 0);
      const auto val = evaluate(classifier_, backend_, data_.validation);
      rec.val_accuracy = val.report.accuracy;
      rec.val_macro_f1 = val.report.macro_f1;
      rec.val_air = val.report.air;
      result_.trace.push_back(rec);
      result_.checkpoints.push_back(seal_checkpoint(payload(epoch)));
      persist(epoch);
    }
    result_.selected_epoch = select_epoch(result_.trace, cfg_.selection);
    result_.selected = checkpoint_for(result_.selected_epoch);
    return std::move(result_);
  }

  /// Loads optimizer, weights and trace from the checkpoint after `epoch`.
  void load(int epoch) {
    if (cfg_.checkpoint_dir.empty()) throw ModelError("resume needs a checkpoint directory");
    for (int e = 1; e <= epoch; ++e) result_.checkpoints.push_back(nlohmann::json());
    const auto p = read_checkpoint(checkpoint_path(cfg_.checkpoint_dir, epoch));
    try {
      if (p.at("epoch").get<int>() != epoch) throw ModelError("checkpoint epoch does not match its directory");
      classifier_ = restore(p, backend_);
      step_ = p.at("adam").at("step").get<std::uint64_t>();
      for (const auto& [name, s] : p.at("adam").at("slots").items()) {
        adam_[name] = {matrix_from_json(s.at("m")), matrix_from_json(s.at("v"))};
      }
      for (const auto& r : p.at("trace")) result_.trace.push_back(record_from_json(r));
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("malformed checkpoint: ") + e.what());
    }
  }

 private:
  std::vector<ParamRef> trainable() {
    std::vector<ParamRef> out;
    for (auto& p : backend_.parameters()) {
      if (p.trainable) out.push_back(p);
    }
    if (classifier_.has_head()) {
      auto& h = classifier_.head();
      out.push_back(make_param("head.weight", h.weight, h.weight_grad, true));
      out.push_back(make_param("head.bias", h.bias, h.bias_grad, true));
    }
    return out;
  }

  std::vector<std::size_t> shuffled(int epoch) const {
    std::vector<std::size_t> order(data_.train.size());
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng{derive_seed(cfg_.finetune.seed, "shuffle", static_cast<std::uint64_t>(epoch))};
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);
    return order;
  }

  /// Loss of one sample, accumulating gradients.
  double sample_loss(const EditSample& s) {
    const auto target = static_cast<Eigen::Index>(*task_.label_set.index_of(*s.intent));
    auto& head = classifier_.head();
    const auto kind = cfg_.approach.transform;
    switch (cfg_.approach.approach) {
      case Approach::gen: return backend_.generation_loss(build_input(s, task_, fmt_), *s.intent, true);
      case Approach::seqc: {
        const auto tape = backend_.make_tape(build_input(s, task_, fmt_).text);
        check_context(backend_.info(), tape.tokens.size());
        const auto st = backend_.forward(tape, backend_.last_position(tape));
        const auto [loss, g] = softmax_cross_entropy(head(st.value), target);
        backend_.backward(tape, st, head.backward(st.value, g));
        return loss;
      }
      case Approach::snet: {
        const auto [old_in, new_in] = build_siamese_inputs(s, fmt_);
        const auto to = backend_.make_tape(old_in.text);
        const auto tn = backend_.make_tape(new_in.text);
        const auto so = backend_.forward(to, backend_.last_position(to));
        const auto sn = backend_.forward(tn, backend_.last_position(tn));
        const Eigen::VectorXd u = transform(kind, so.value, sn.value);
        const auto [loss, g] = softmax_cross_entropy(head(u), target);
        const auto [go, gn] = transform_backward(kind, so.value, sn.value, head.backward(u, g));
        backend_.backward(to, so, go);
        backend_.backward(tn, sn, gn);
        return loss;
      }
      case Approach::xnet: {
        const auto in = build_input(s, task_, fmt_);
        if (!in.old_segment_end || !in.new_segment_end) throw ModelError("XNet needs both segment offsets");
        const auto tape = backend_.make_tape(in.text);
        check_context(backend_.info(), tape.tokens.size());
        const auto so = backend_.forward(tape, token_index_at(tape.tokens, *in.old_segment_end));
        const auto sn = backend_.forward(tape, token_index_at(tape.tokens, *in.new_segment_end));
        const Eigen::VectorXd u = transform(kind, so.value, sn.value);
        const auto [loss, g] = softmax_cross_entropy(head(u), target);
        const auto [go, gn] = transform_backward(kind, so.value, sn.value, head.backward(u, g));
        backend_.backward(tape, so, go);
        backend_.backward(tape, sn, gn);
        return loss;
      }
    }
    return 0.0;
  }

  double train_epoch(int epoch) {
    const auto order = shuffled(epoch);
    const auto bs = static_cast<std::size_t>(cfg_.optimizer.batch_size);
    double total = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch_; ++step) {
      backend_.set_training(true, derive_seed(cfg_.finetune.seed, "dropout",
                                              static_cast<std::uint64_t>(epoch) * 1000003ULL + step));
      auto params = trainable();
      zero_grads(params);
      const auto begin = step * bs;
      const auto end = std::min(begin + bs, order.size());
      for (auto i = begin; i < end; ++i) {
        const double loss = sample_loss(data_.train[order[i]]);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step + 1));
        }
        total += loss;
      }
      adam_step(params, static_cast<double>(end - begin));
    }
    return total / static_cast<double>(order.size());
  }

  void adam_step(std::vector<ParamRef>& params, double batch) {
    ++step_;
    const auto& o = cfg_.optimizer;
    const double warm = warmup_ == 0 ? 1.0 : std::min(1.0, double(step_) / double(warmup_));
    const double lr = lr_ * warm;
    const double c1 = 1.0 - std::pow(o.beta1, double(step_));
    const double c2 = 1.0 - std::pow(o.beta2, double(step_));
    for (auto& p : params) {
      auto& slot = adam_[p.name];
      if (slot.m.size() == 0) {
        slot.m = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
        slot.v = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
      }
      const Eigen::MatrixXd g = p.grad / batch;
      slot.m = o.beta1 * slot.m + (1.0 - o.beta1) * g;
      slot.v = o.beta2 * slot.v + (1.0 - o.beta2) * g.cwiseAbs2();
      p.value.array() -= lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + o.epsilon);
    }
  }

  nlohmann::json payload(int epoch) {
    nlohmann::json p;
    p["epoch"] = epoch;
    p["config"] = config_json(cfg_);
    p["finetune"] = finetune_json(cfg_.finetune);
    p["classifier"] = classifier_.to_json();
    if (auto* tiny = dynamic_cast<TinyEncoder*>(&backend_)) {
      p["backend"] = {{"kind", "tiny"}, {"options", to_json(tiny->options())}};
    } else {
      p["backend"] = {{"kind", "external"}, {"model", backend_.info().name}};
    }
    auto& saved = p["params"] = nlohmann::json::object();
    for (auto& param : backend_.parameters()) {
      if (param.trainable) saved[param.name] = matrix_to_json(param.value);
    }
    auto& slots = p["adam"]["slots"] = nlohmann::json::object();
    p["adam"]["step"] = step_;
    for (const auto& [name, s] : adam_) slots[name] = {{"m", matrix_to_json(s.m)}, {"v", matrix_to_json(s.v)}};
    auto& trace = p["trace"] = nlohmann::json::array();
    for (const auto& r : result_.trace) trace.push_back(record_json(r));
    return p;
  }

  void persist(int epoch) {
    if (cfg_.checkpoint_dir.empty()) return;
    const auto& dir = cfg_.checkpoint_dir;
    write_file(checkpoint_path(dir, epoch), result_.checkpoints.back().dump());
    nlohmann::json metrics;
    auto& trace = metrics["trace"] = nlohmann::json::array();
    for (const auto& r : result_.trace) trace.push_back(record_json(r));
    metrics["selected_epoch"] = select_epoch(result_.trace, cfg_.selection);
    write_file(dir / "metrics.json", metrics.dump(2) + "\n");
    write_file(dir / "run.json", config_json(cfg_).dump(2) + "\n");
  }

  nlohmann::json checkpoint_for(int epoch) {
    auto& doc = result_.checkpoints.at(static_cast<std::size_t>(epoch - 1));
    if (doc.is_null()) {
      doc = nlohmann::json::parse(read_file(checkpoint_path(cfg_.checkpoint_dir, epoch)));
      open_checkpoint(doc);
    }
    return doc;
  }

  const TrainConfig& cfg_;
  const TaskSpec& task_;
  const DatasetSplit& data_;
  TrainableBackend& backend_;
  Classifier classifier_;
  InputFormat fmt_;
  double lr_ = 0.0;
  std::size_t steps_per_epoch_ = 0;
  std::size_t warmup_ = 0;
  std::uint64_t step_ = 0;
  std::map<std::string, AdamSlot> adam_;
  TrainResult result_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const TaskSpec& task, const DatasetSplit& data,
                  TrainableBackend& backend) {
  Trainer t(cfg, task, data, backend);
  return t.run(1);
}

TrainResult resume(const TrainConfig& cfg, const TaskSpec& task, const DatasetSplit& data,
                   TrainableBackend& backend, int from_epoch) {
  if (from_epoch < 1 || from_epoch > cfg.finetune.epochs) {
    throw ModelError("resume epoch " + std::to_string(from_epoch) + " outside 1.." +
                     std::to_string(cfg.finetune.epochs));
  }
  Trainer t(cfg, task, data, backend);
  t.load(from_epoch);
  return t.run(from_epoch + 1);
}

}  // namespace eic
