#include "eic/remote_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "eic/error.hpp"

namespace eic {

RemoteSettings RemoteSettings::from_environment() {
  RemoteSettings s;
  if (const char* url = std::getenv("EIC_REMOTE_URL")) s.url = url;
  if (const char* token = std::getenv("EIC_REMOTE_TOKEN")) s.token = token;
  return s;
}

std::string build_remote_request(std::string_view model, std::string_view prompt, int max_tokens) {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["prompt"] = prompt;
  j["max_tokens"] = max_tokens;
  j["temperature"] = 0;
  return j.dump();
}

std::string parse_remote_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ModelError("remote response is not JSON");
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ModelError("remote response lacks a string 'text' field");
  }
  return j["text"].get<std::string>();
}

RemoteGenerator::RemoteGenerator(ModelInfo info, RemoteSettings settings)
    : info_(std::move(info)), settings_(std::move(settings)) {
  if (settings_.url.empty()) throw ConfigError({"remote endpoint URL is not set (EIC_REMOTE_URL)"});
  if (settings_.max_attempts < 1) throw ConfigError({"remote max_attempts must be >= 1"});
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError({"remote URL needs a scheme: " + url});
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

}  // namespace

std::string RemoteGenerator::generate(const EncodedInput& input, int max_new_tokens) {
  if (max_new_tokens <= 0) return {};
  const auto [origin, path] = split_url(settings_.url);
  const auto body = build_remote_request(info_.name, input.text, max_new_tokens);
  httplib::Headers headers;
  if (!settings_.token.empty()) headers.emplace("Authorization", "Bearer " + settings_.token);

  std::string last_error;
  for (int attempt = 1; attempt <= settings_.max_attempts; ++attempt) {
    httplib::Client client(origin);
    client.set_connection_timeout(settings_.timeout);
    client.set_read_timeout(settings_.timeout);
    auto res = client.Post(path, headers, body, "application/json");
    if (res && res->status == 200) {
      counts_.decode_steps += static_cast<std::uint64_t>(max_new_tokens);
      return parse_remote_response(res->body);
    }
    if (res && res->status < 500) {
      throw TransportError("remote endpoint answered HTTP " + std::to_string(res->status), attempt);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < settings_.max_attempts) std::this_thread::sleep_for(settings_.backoff * attempt);
  }
  throw TransportError("remote generation failed: " + last_error, settings_.max_attempts);
}

}  // namespace eic
