#include "eic/tiny_encoder.hpp"

#include <cmath>
#include <sstream>

#include "eic/error.hpp"
#include "eic/util.hpp"

namespace eic {

TrainableBackend& apply_finetune_config(Backend& backend, const FinetuneConfig& cfg) {
  auto* trainable = dynamic_cast<TrainableBackend*>(&backend);
  if (!trainable || !backend.has(kTrainable)) {
    throw ModelError("backend '" + backend.info().name + "' is not trainable");
  }
  trainable->apply_finetune_config(cfg);
  return *trainable;
}

namespace {

Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::uint64_t seed) {
  SplitMix64 mix{seed};
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * mix.symmetric();
  }
  return m;
}

}  // namespace

Eigen::VectorXd TinyEncoder::AdaptedLinear::apply(const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& keep) const {
  Eigen::VectorXd y = weight * x;
  if (adapted()) y.noalias() += scale * (lora_b * (lora_a * keep.cwiseProduct(x)));
  return y;
}

Eigen::VectorXd TinyEncoder::AdaptedLinear::backward(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& keep,
                                                     const Eigen::VectorXd& gy,
                                                     bool base_trainable) {
  if (base_trainable) weight_grad.noalias() += gy * x.transpose();
  Eigen::VectorXd gx = weight.transpose() * gy;
  if (adapted()) {
    const Eigen::VectorXd xd = keep.cwiseProduct(x);
    const Eigen::VectorXd z = lora_a * xd;
    const Eigen::VectorXd gz = scale * (lora_b.transpose() * gy);
    lora_b_grad.noalias() += scale * gy * z.transpose();
    lora_a_grad.noalias() += gz * xd.transpose();
    gx.noalias() += keep.cwiseProduct(lora_a.transpose() * gz);
  }
  return gx;
}

TinyEncoder::TinyEncoder(Options opts) : opts_(std::move(opts)) {
  if (opts_.dim <= 0 || opts_.buckets <= 0) throw ConfigError({"tiny encoder needs positive dim and buckets"});
  info_ = {"tiny", opts_.dim, opts_.arch, false, 1, opts_.max_context};
  finetune_.mode = FinetuneMode::full;
  finetune_.epochs = 1;

  const auto d = opts_.dim;
  embed_ = uniform(opts_.buckets + 1, d, 0.5, derive_seed(opts_.seed, "embed"));
  embed_grad_ = Eigen::MatrixXd::Zero(embed_.rows(), embed_.cols());
  if (opts_.projection) {
    proj_.weight = Eigen::MatrixXd::Identity(d, d);
    proj_.weight_grad = Eigen::MatrixXd::Zero(d, d);
  }
  if (!opts_.output_vocab.empty()) {
    opts_.output_vocab.emplace_back(kEndToken);
    const auto v = static_cast<Eigen::Index>(opts_.output_vocab.size());
    lm_head_.weight = uniform(v, d, 1.0 / std::sqrt(double(d)), derive_seed(opts_.seed, "lm_head"));
    lm_head_.weight_grad = Eigen::MatrixXd::Zero(v, d);
  }
}

unsigned TinyEncoder::capabilities() const {
  unsigned caps = kEncode | kTrainable;
  if (lm_head_.weight.size() > 0) caps |= kGenerate;
  return caps;
}

void TinyEncoder::apply_finetune_config(const FinetuneConfig& cfg) {
  validate(cfg);
  std::vector<AdaptedLinear*> maps;
  if (opts_.projection) maps.push_back(&proj_);
  if (lm_head_.weight.size() > 0) maps.push_back(&lm_head_);
  if (cfg.mode == FinetuneMode::adapter && maps.empty()) {
    throw ModelError("adapter fine-tuning needs linear maps; this encoder exposes none");
  }
  finetune_ = cfg;
  std::uint64_t index = 0;
  for (auto* lin : maps) {
    if (cfg.mode == FinetuneMode::adapter) {
      const auto r = cfg.adapter_rank;
      const auto in = lin->weight.cols();
      lin->lora_a = uniform(r, in, 1.0 / std::sqrt(double(in)), derive_seed(cfg.seed, "adapter", index++));
      lin->lora_b = Eigen::MatrixXd::Zero(lin->weight.rows(), r);
      lin->lora_a_grad = Eigen::MatrixXd::Zero(lin->lora_a.rows(), lin->lora_a.cols());
      lin->lora_b_grad = Eigen::MatrixXd::Zero(lin->lora_b.rows(), lin->lora_b.cols());
      lin->scale = double(cfg.adapter_alpha) / double(r);
    } else {
      lin->lora_a.resize(0, 0);
      lin->lora_b.resize(0, 0);
      lin->lora_a_grad.resize(0, 0);
      lin->lora_b_grad.resize(0, 0);
      lin->scale = 0.0;
    }
  }
}

std::vector<ParamRef> TinyEncoder::parameters() {
  const bool full = finetune_.mode == FinetuneMode::full;
  std::vector<ParamRef> out;
  out.push_back(make_param("embed", embed_, embed_grad_, full));
  auto add = [&](const std::string& prefix, AdaptedLinear& lin) {
    if (lin.weight.size() == 0) return;
    out.push_back(make_param(prefix + ".weight", lin.weight, lin.weight_grad, full));
    if (lin.adapted()) {
      out.push_back(make_param(prefix + ".lora_a", lin.lora_a, lin.lora_a_grad, true));
      out.push_back(make_param(prefix + ".lora_b", lin.lora_b, lin.lora_b_grad, true));
    }
  };
  add("proj", proj_);
  add("lm_head", lm_head_);
  return out;
}

void TinyEncoder::set_training(bool on, std::uint64_t seed) {
  training_ = on;
  dropout_rng_.seed(seed);
}

int TinyEncoder::bucket(std::string_view token) const {
  return static_cast<int>(fnv1a64(token) % static_cast<std::uint64_t>(opts_.buckets));
}

TrainableBackend::Tape TinyEncoder::make_tape(std::string_view text) const {
  Tape tape;
  tape.tokens = tokenize(text);
  for (const auto& t : tape.tokens) tape.ids.push_back(bucket(t.text));
  if (tape.ids.empty()) tape.ids.push_back(opts_.buckets);
  return tape;
}

std::size_t TinyEncoder::last_position(const Tape& tape) const {
  return opts_.arch == Architecture::encoder_only ? 0 : tape.ids.size() - 1;
}

Eigen::VectorXd TinyEncoder::pooled(const std::vector<int>& ids, std::size_t position) const {
  const std::size_t n = opts_.arch == Architecture::encoder_only ? ids.size() : position + 1;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(opts_.dim);
  for (std::size_t s = 0; s < n; ++s) p += embed_.row(ids[s]).transpose();
  return p / double(n);
}

Eigen::VectorXd TinyEncoder::dropout_mask(Eigen::Index n, const AdaptedLinear& lin) {
  Eigen::VectorXd keep = Eigen::VectorXd::Ones(n);
  const double p = finetune_.adapter_dropout;
  if (!training_ || !lin.adapted() || p <= 0.0) return keep;
  std::bernoulli_distribution drop(p);
  for (Eigen::Index i = 0; i < n; ++i) keep[i] = drop(dropout_rng_) ? 0.0 : 1.0 / (1.0 - p);
  return keep;
}

Eigen::VectorXd TinyEncoder::project(const Eigen::VectorXd& p, const Eigen::VectorXd& keep) const {
  return opts_.projection ? proj_.apply(p, keep) : p;
}

TrainableBackend::State TinyEncoder::forward(const Tape& tape, std::size_t position) {
  if (position >= tape.ids.size()) throw ModelError("position outside the input");
  State s;
  s.position = position;
  s.pooled = pooled(tape.ids, position);
  s.keep = dropout_mask(opts_.dim, proj_);
  s.value = project(s.pooled, s.keep);
  return s;
}

void TinyEncoder::backward(const Tape& tape, const State& state, const Eigen::VectorXd& grad) {
  const bool full = finetune_.mode == FinetuneMode::full;
  const Eigen::VectorXd gp = opts_.projection ? proj_.backward(state.pooled, state.keep, grad, full) : grad;
  if (!full) return;
  const std::size_t n = opts_.arch == Architecture::encoder_only ? tape.ids.size() : state.position + 1;
  const Eigen::RowVectorXd share = gp.transpose() / double(n);
  for (std::size_t s = 0; s < n; ++s) embed_grad_.row(tape.ids[s]) += share;
}

Eigen::VectorXd TinyEncoder::encode_last(const EncodedInput& input) {
  const auto tape = make_tape(input.text);
  check_context(info_, tape.tokens.size());
  ++counts_.encode_passes;
  return forward(tape, last_position(tape)).value;
}

SpanEncoding TinyEncoder::encode_spans(const EncodedInput& input) {
  if (!input.old_segment_end || !input.new_segment_end) {
    throw ModelError("span encoding needs both segment offsets");
  }
  const auto tape = make_tape(input.text);
  check_context(info_, tape.tokens.size());
  ++counts_.encode_passes;
  const auto o = token_index_at(tape.tokens, *input.old_segment_end);
  const auto n = token_index_at(tape.tokens, *input.new_segment_end);
  return {forward(tape, o).value, forward(tape, n).value};
}

std::vector<int> TinyEncoder::target_ids(std::string_view target) const {
  if (lm_head_.weight.size() == 0) throw ModelError("tiny encoder has no output vocabulary");
  std::vector<int> ids;
  std::istringstream in{std::string(target)};
  for (std::string w; in >> w;) {
    int found = -1;
    for (std::size_t i = 0; i + 1 < opts_.output_vocab.size(); ++i) {
      if (opts_.output_vocab[i] == w) found = static_cast<int>(i);
    }
    if (found < 0) throw ModelError("target token '" + w + "' is not in the output vocabulary");
    ids.push_back(found);
  }
  ids.push_back(static_cast<int>(opts_.output_vocab.size() - 1));
  return ids;
}

double TinyEncoder::generation_loss(const EncodedInput& prompt, std::string_view target, bool backprop) {
  if (opts_.arch == Architecture::encoder_only) throw ModelError("encoder-only models cannot generate");
  const auto targets = target_ids(target);
  auto tape = make_tape(prompt.text);
  check_context(info_, tape.tokens.size() + targets.size());
  const bool full = finetune_.mode == FinetuneMode::full;
  double loss = 0.0;
  for (int y : targets) {
    const auto pos = tape.ids.size() - 1;
    const Eigen::VectorXd p = pooled(tape.ids, pos);
    const Eigen::VectorXd keep_p = dropout_mask(opts_.dim, proj_);
    const Eigen::VectorXd h = project(p, keep_p) + embed_.row(tape.ids[pos]).transpose();
    const Eigen::VectorXd keep_l = dropout_mask(opts_.dim, lm_head_);
    const Eigen::VectorXd logits = lm_head_.apply(h, keep_l);
    const double mx = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
    const double z = e.sum();
    loss += std::log(z) + mx - logits[y];
    if (backprop) {
      Eigen::VectorXd g = e / z;
      g[y] -= 1.0;
      const Eigen::VectorXd gh = lm_head_.backward(h, keep_l, g, full);
      const Eigen::VectorXd gp = opts_.projection ? proj_.backward(p, keep_p, gh, full) : gh;
      if (full) {
        const Eigen::RowVectorXd share = gp.transpose() / double(pos + 1);
        for (std::size_t s = 0; s <= pos; ++s) embed_grad_.row(tape.ids[s]) += share;
        embed_grad_.row(tape.ids[pos]) += gh.transpose();
      }
    }
    tape.ids.push_back(bucket(opts_.output_vocab[static_cast<std::size_t>(y)]));
  }
  return loss;
}

std::string TinyEncoder::generate(const EncodedInput& input, int max_new_tokens) {
  if (lm_head_.weight.size() == 0) throw ModelError("tiny encoder has no output vocabulary");
  if (opts_.arch == Architecture::encoder_only) throw ModelError("encoder-only models cannot generate");
  auto tape = make_tape(input.text);
  check_context(info_, tape.tokens.size() + static_cast<std::size_t>(std::max(max_new_tokens, 0)));
  const auto eos = static_cast<Eigen::Index>(opts_.output_vocab.size() - 1);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(opts_.dim);
  std::string out;
  bool ended = false;
  for (int step = 0; step < max_new_tokens; ++step) {
    ++counts_.decode_steps;
    const Eigen::VectorXd h =
        project(pooled(tape.ids, tape.ids.size() - 1), ones) + embed_.row(tape.ids.back()).transpose();
    Eigen::Index best = 0;
    lm_head_.apply(h, ones).maxCoeff(&best);
    const auto& word = opts_.output_vocab[static_cast<std::size_t>(best)];
    tape.ids.push_back(bucket(word));
    if (best == eos) ended = true;
    if (ended) continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

}  // namespace eic
