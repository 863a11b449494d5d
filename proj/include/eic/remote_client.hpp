#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include "eic/backend.hpp"

namespace eic {

/// Endpoint settings. Read from EIC_REMOTE_URL and EIC_REMOTE_TOKEN; the token is never logged
/// or included in error messages.
struct RemoteSettings {
  std::string url;    // e.g. "http://host:8080/v1/generate"
  std::string token;  // optional bearer token
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::seconds timeout{60};

  static RemoteSettings from_environment();
};

/// Wire format: request {model, prompt, max_tokens, temperature: 0}; response {text}.
std::string build_remote_request(std::string_view model, std::string_view prompt, int max_tokens);
std::string parse_remote_response(std::string_view body);

/// Generation-only backend that forwards prompts to a remote JSON-over-HTTP endpoint.
class RemoteGenerator final : public Backend {
 public:
  RemoteGenerator(ModelInfo info, RemoteSettings settings);

  const ModelInfo& info() const override { return info_; }
  unsigned capabilities() const override { return kGenerate; }

  /// Retries transport failures and 5xx responses; throws TransportError with the attempt count.
  std::string generate(const EncodedInput& input, int max_new_tokens) override;

 private:
  ModelInfo info_;
  RemoteSettings settings_;
};

}  // namespace eic
