#include "eic/backend.hpp"

#include <cctype>

#include "eic/error.hpp"

namespace eic {

namespace {
bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }
}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (word_byte(c)) {
      while (j < text.size() && word_byte(static_cast<unsigned char>(text[j]))) ++j;
    }
    out.push_back({std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

std::size_t token_index_at(std::span<const Token> tokens, std::size_t offset) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < tokens.size() && tokens[i].begin <= offset; ++i) idx = i;
  return idx;
}

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::encoder_only: return "encoder-only";
    case Architecture::decoder_only: return "decoder-only";
    case Architecture::encoder_decoder: return "encoder-decoder";
  }
  return "?";
}

const std::vector<ModelInfo>& model_registry() {
  static const std::vector<ModelInfo> models{
      {"gpt-j", 4096, Architecture::decoder_only, false, 28, 2048},
      {"mistral-instruct", 4096, Architecture::decoder_only, true, 32, 8192},
      {"llama2-7b", 4096, Architecture::decoder_only, false, 32, 4096},
      {"llama2-7b-chat", 4096, Architecture::decoder_only, true, 32, 4096},
      {"llama2-13b", 5120, Architecture::decoder_only, false, 40, 4096},
      {"llama2-13b-chat", 5120, Architecture::decoder_only, true, 40, 4096},
      {"llama3-8b", 4096, Architecture::decoder_only, false, 32, 8192},
      {"llama3-8b-instruct", 4096, Architecture::decoder_only, true, 32, 8192},
      {"roberta-base", 768, Architecture::encoder_only, false, 12, 512},
      {"t5-base", 768, Architecture::encoder_decoder, false, 12, 512},
  };
  return models;
}

const ModelInfo& find_model(std::string_view name) {
  for (const auto& m : model_registry()) {
    if (m.name == name) return m;
  }
  throw ModelError("unknown base model '" + std::string(name) + "'");
}

void validate(const FinetuneConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.epochs < 1) v.push_back("epochs must be >= 1");
  if (cfg.mode == FinetuneMode::adapter) {
    if (cfg.adapter_rank < 1) v.push_back("adapter rank must be >= 1 in adapter mode");
    if (cfg.adapter_alpha < 1) v.push_back("adapter alpha must be >= 1 in adapter mode");
    if (!(cfg.adapter_dropout >= 0.0 && cfg.adapter_dropout < 1.0)) {
      v.push_back("adapter dropout must lie in [0, 1)");
    }
  } else if (cfg.adapter_rank != 0 || cfg.adapter_alpha != 0 || cfg.adapter_dropout != 0.0) {
    v.push_back("adapter settings are only valid in adapter mode");
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::gen: return "gen";
    case Approach::seqc: return "seqc";
    case Approach::snet: return "snet";
    case Approach::xnet: return "xnet";
  }
  return "?";
}

std::optional<Approach> parse_approach(std::string_view s) {
  for (auto a : {Approach::gen, Approach::seqc, Approach::snet, Approach::xnet}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

FinetuneConfig finetune_preset(std::string_view task_id, Approach approach) {
  FinetuneConfig cfg;
  cfg.mode = FinetuneMode::adapter;
  cfg.adapter_dropout = 0.1;
  const bool gen = approach == Approach::gen;
  if (task_id == "sdq") {
    cfg.adapter_rank = cfg.adapter_alpha = gen ? 64 : 32;
  } else {
    cfg.adapter_rank = cfg.adapter_alpha = gen ? 256 : 128;
  }
  cfg.epochs = (task_id == "ec" || task_id == "tsec") ? 5 : 10;
  return cfg;
}

Eigen::VectorXd Backend::encode_last(const EncodedInput&) {
  throw ModelError("backend '" + info().name + "' cannot encode");
}

SpanEncoding Backend::encode_spans(const EncodedInput&) {
  throw ModelError("backend '" + info().name + "' cannot encode");
}

std::string Backend::generate(const EncodedInput&, int) {
  throw ModelError("backend '" + info().name + "' cannot generate");
}

void check_context(const ModelInfo& info, std::size_t tokens) {
  if (tokens > info.max_context) {
    throw ModelError("input of " + std::to_string(tokens) + " tokens exceeds the " +
                     std::to_string(info.max_context) + "-token context of '" + info.name +
                     "' by " + std::to_string(tokens - info.max_context));
  }
}

}  // namespace eic
