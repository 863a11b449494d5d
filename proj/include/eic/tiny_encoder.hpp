#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "eic/backend.hpp"
#include "eic/param.hpp"

namespace eic {

/// A backend whose forward pass is differentiable, so it can be fine-tuned in-process.
class TrainableBackend : public Backend {
 public:
  /// Token ids for one input.
  struct Tape {
    std::vector<int> ids;
    std::vector<Token> tokens;
  };

  /// Cached forward state at one position, consumed by backward().
  struct State {
    Eigen::VectorXd value;
    Eigen::VectorXd pooled;
    Eigen::VectorXd keep;  // adapter dropout mask, already divided by the keep probability
    std::size_t position = 0;
  };

  /// Full mode marks all weights trainable; adapter mode attaches low-rank factors to every
  /// linear map and freezes the base weights.
  virtual void apply_finetune_config(const FinetuneConfig& cfg) = 0;
  virtual const FinetuneConfig& finetune() const = 0;
  virtual std::vector<ParamRef> parameters() = 0;
  /// Training mode enables adapter dropout with masks drawn from `seed`.
  virtual void set_training(bool on, std::uint64_t seed) = 0;

  virtual Tape make_tape(std::string_view text) const = 0;
  virtual std::size_t last_position(const Tape& tape) const = 0;
  virtual State forward(const Tape& tape, std::size_t position) = 0;
  virtual void backward(const Tape& tape, const State& state, const Eigen::VectorXd& grad) = 0;

  /// Teacher-forced cross-entropy (summed over target tokens plus end marker) of `target`
  /// following `prompt`; prompt tokens carry no loss. Accumulates gradients when `backprop`.
  virtual double generation_loss(const EncodedInput& prompt, std::string_view target, bool backprop) = 0;
};

/// Throws ModelError unless `backend` is trainable (and exposes linear maps for adapter mode).
TrainableBackend& apply_finetune_config(Backend& backend, const FinetuneConfig& cfg);

/// Tiny trainable encoder: hashed token embeddings, causal mean pooling and one square
/// projection. With an output vocabulary it also decodes greedily through a linear LM head
/// reading the projected state plus the embedding of the latest token.
class TinyEncoder final : public TrainableBackend {
 public:
  struct Options {
    int dim = 32;
    int buckets = 2048;
    Architecture arch = Architecture::decoder_only;
    std::size_t max_context = 1024;
    std::uint64_t seed = 0;
    /// When false the model is embeddings + mean pool only, with no linear maps.
    bool projection = true;
    /// Whitespace tokens the generator may emit; empty disables generation.
    std::vector<std::string> output_vocab;
  };

  static constexpr std::string_view kEndToken = "</s>";

  TinyEncoder() : TinyEncoder(Options{}) {}
  explicit TinyEncoder(Options opts);

  const ModelInfo& info() const override { return info_; }
  unsigned capabilities() const override;
  const Options& options() const noexcept { return opts_; }

  Eigen::VectorXd encode_last(const EncodedInput& input) override;
  SpanEncoding encode_spans(const EncodedInput& input) override;
  std::string generate(const EncodedInput& input, int max_new_tokens) override;

  void apply_finetune_config(const FinetuneConfig& cfg) override;
  const FinetuneConfig& finetune() const override { return finetune_; }
  std::vector<ParamRef> parameters() override;
  void set_training(bool on, std::uint64_t seed) override;

  Tape make_tape(std::string_view text) const override;
  std::size_t last_position(const Tape& tape) const override;
  State forward(const Tape& tape, std::size_t position) override;
  void backward(const Tape& tape, const State& state, const Eigen::VectorXd& grad) override;
  double generation_loss(const EncodedInput& prompt, std::string_view target, bool backprop) override;

  /// Output-vocabulary ids of `target` followed by the end marker.
  std::vector<int> target_ids(std::string_view target) const;

 private:
  /// y = W x + (alpha / r) * B A (keep .* x), with B zero-initialised.
  struct AdaptedLinear {
    Eigen::MatrixXd weight, weight_grad;
    Eigen::MatrixXd lora_a, lora_a_grad, lora_b, lora_b_grad;
    double scale = 0.0;

    bool adapted() const { return lora_a.size() > 0; }
    Eigen::VectorXd apply(const Eigen::VectorXd& x, const Eigen::VectorXd& keep) const;
    Eigen::VectorXd backward(const Eigen::VectorXd& x, const Eigen::VectorXd& keep,
                             const Eigen::VectorXd& gy, bool base_trainable);
  };

  int bucket(std::string_view token) const;
  Eigen::VectorXd pooled(const std::vector<int>& ids, std::size_t position) const;
  Eigen::VectorXd dropout_mask(Eigen::Index n, const AdaptedLinear& lin);
  Eigen::VectorXd project(const Eigen::VectorXd& p, const Eigen::VectorXd& keep) const;

  Options opts_;
  ModelInfo info_;
  FinetuneConfig finetune_;
  bool tuned_ = false;
  bool training_ = false;
  std::mt19937_64 dropout_rng_;

  Eigen::MatrixXd embed_, embed_grad_;  // (buckets + 1) x dim, last row is the null token
  AdaptedLinear proj_;
  AdaptedLinear lm_head_;
};

}  // namespace eic
