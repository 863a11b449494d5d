#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "eic/prompting.hpp"

namespace eic {

// ---------------------------------------------------------------------------
// Tokenization

/// A token with its [begin, end) byte range in the source text.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Runs of word characters form one token; every other non-space byte is its own token.
std::vector<Token> tokenize(std::string_view text);

/// Index of the token containing `offset`, or of the last token starting before it when the
/// offset falls on whitespace. Returns 0 when no token starts at or before `offset`.
std::size_t token_index_at(std::span<const Token> tokens, std::size_t offset);

// ---------------------------------------------------------------------------
// Model description

enum class Architecture { encoder_only, decoder_only, encoder_decoder };

std::string_view to_string(Architecture a);

struct ModelInfo {
  std::string name;
  int hidden_dim = 0;
  Architecture arch = Architecture::decoder_only;
  bool instruction_tuned = false;
  int layers = 0;
  std::size_t max_context = 4096;
};

/// Base models compared in the experiments (name, layers, hidden size, architecture).
const std::vector<ModelInfo>& model_registry();
const ModelInfo& find_model(std::string_view name);

enum class FinetuneMode { full, adapter };

/// Fine-tuning settings. Adapters (rank r, scale alpha/r, dropout) target every linear map.
struct FinetuneConfig {
  FinetuneMode mode = FinetuneMode::adapter;
  int adapter_rank = 0;
  int adapter_alpha = 0;
  double adapter_dropout = 0.0;
  int epochs = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

/// Throws ConfigError listing every violated constraint.
void validate(const FinetuneConfig& cfg);

enum class Approach { gen, seqc, snet, xnet };

std::string_view to_string(Approach a);
std::optional<Approach> parse_approach(std::string_view s);

/// Preset adapter settings per task and approach (generative approaches use larger ranks).
FinetuneConfig finetune_preset(std::string_view task_id, Approach approach);

// ---------------------------------------------------------------------------
// Backends

enum Capability : unsigned {
  kEncode = 1u << 0,
  kGenerate = 1u << 1,
  kTrainable = 1u << 2,
};

/// Forward-pass accounting. Prompt prefill is folded into the first decode step.
struct InvocationCounts {
  std::uint64_t encode_passes = 0;
  std::uint64_t decode_steps = 0;
};

struct SpanEncoding {
  Eigen::VectorXd old_state;
  Eigen::VectorXd new_state;
};

/// A language model behind a uniform surface. One inference stream per instance: callers
/// serialize calls on a handle; separate handles are independent.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const ModelInfo& info() const = 0;
  virtual unsigned capabilities() const = 0;
  bool has(Capability c) const { return (capabilities() & c) != 0; }

  /// Final-layer state at the last token (first token for encoder-only models).
  virtual Eigen::VectorXd encode_last(const EncodedInput& input);
  /// States at the tokens holding old_segment_end and new_segment_end, from one pass.
  virtual SpanEncoding encode_spans(const EncodedInput& input);
  /// Greedy decoding of exactly `max_new_tokens` steps; text after end-of-sequence is dropped.
  virtual std::string generate(const EncodedInput& input, int max_new_tokens);

  const InvocationCounts& counts() const noexcept { return counts_; }
  void reset_counts() noexcept { counts_ = {}; }

 protected:
  InvocationCounts counts_;
};

/// Throws ModelError when the token count exceeds the context window.
void check_context(const ModelInfo& info, std::size_t tokens);

}  // namespace eic
