#pragma once

#include <chrono>
#include <functional>
#include <string>

#include "eic/backend.hpp"

namespace eic {

/// Deterministic hash-embedding model for tests and desk-scale runs.
///
/// Each token maps to a fixed pseudo-random vector seeded by its FNV hash. The state at
/// position t is the mean of token vectors up to t (all tokens for encoder-only models) plus a
/// small sinusoidal position term. Empty input uses a reserved null token.
class StubBackend final : public Backend {
 public:
  struct Options {
    int dim = 32;
    Architecture arch = Architecture::decoder_only;
    std::size_t max_context = 4096;
    /// Busy-wait per encode pass / decode step, to model unit forward-pass cost.
    std::chrono::nanoseconds unit_cost{0};
  };

  StubBackend() : StubBackend(Options{}) {}
  explicit StubBackend(Options opts);

  const ModelInfo& info() const override { return info_; }
  unsigned capabilities() const override { return kEncode | kGenerate; }

  Eigen::VectorXd encode_last(const EncodedInput& input) override;
  SpanEncoding encode_spans(const EncodedInput& input) override;
  std::string generate(const EncodedInput& input, int max_new_tokens) override;

  /// The generator emits the responder's output, one whitespace-separated token per step.
  void set_responder(std::function<std::string(const EncodedInput&)> responder) {
    responder_ = std::move(responder);
  }

  /// The vector used for empty input.
  Eigen::VectorXd null_vector() const;
  Eigen::VectorXd token_vector(std::string_view token) const;

 private:
  Eigen::MatrixXd states(const std::vector<Token>& tokens) const;
  void spend() const;

  Options opts_;
  ModelInfo info_;
  std::function<std::string(const EncodedInput&)> responder_;
};

}  // namespace eic
