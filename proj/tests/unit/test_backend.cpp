#include <doctest.h>

#include <atomic>
#include <thread>

#include "eic/error.hpp"
#include "eic/remote_client.hpp"
#include "eic/stub_backend.hpp"
#include "eic/tiny_encoder.hpp"
#include "golden.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a _res macro.
#include <httplib.h>
#include <json.hpp>

using namespace eic;

TEST_CASE("tokenizer splits words and punctuation with byte ranges") {
  const auto t = tokenize("The cat's  mat.");
  std::vector<std::string> texts;
  for (const auto& x : t) texts.push_back(x.text);
  CHECK(texts == std::vector<std::string>{"The", "cat", "'", "s", "mat", "."});
  CHECK(t[4].begin == 11);
  CHECK(t[4].end == 14);
  CHECK(token_index_at(t, 12) == 4);
  CHECK(token_index_at(t, 10) == 3);
  CHECK(tokenize("").empty());
}

TEST_CASE("stub encodings are deterministic and defined on empty input") {
  StubBackend a, b;
  const EncodedInput x{"same text twice", std::nullopt, std::nullopt};
  CHECK(a.encode_last(x) == a.encode_last(x));
  CHECK(a.encode_last(x) == b.encode_last(x));
  CHECK(a.encode_last(x).size() == 32);
  const auto blank = a.encode_last({"", std::nullopt, std::nullopt});
  CHECK(blank.allFinite());
  CHECK(blank == a.encode_last({"   ", std::nullopt, std::nullopt}));
  CHECK(blank != a.encode_last({"x", std::nullopt, std::nullopt}));
  CHECK(a.encode_last({"other", std::nullopt, std::nullopt}) != a.encode_last(x));
}

TEST_CASE("span encodings share one pass and agree with the last state") {
  StubBackend s;
  const std::string text = "<old> a b </old>\n<new> c d </new>";
  const EncodedInput in{text, text.find(" </old>"), text.size() - 1};
  s.reset_counts();
  const auto spans = s.encode_spans(in);
  CHECK(s.counts().encode_passes == 1);
  CHECK(spans.new_state == s.encode_last(in));
  const EncodedInput same{text, 7, 7};
  const auto tied = s.encode_spans(same);
  CHECK(tied.old_state == tied.new_state);
  CHECK_THROWS_AS(s.encode_spans({text, std::nullopt, 3}), ModelError);
  const EncodedInput empty_old{"<old> </old>\n<new> c </new>", 5, 20};
  CHECK(s.encode_spans(empty_old).old_state.allFinite());
}

TEST_CASE("encoder-only stubs see the whole input from the first token") {
  StubBackend::Options o;
  o.arch = Architecture::encoder_only;
  StubBackend s(o);
  CHECK(s.encode_last({"alpha beta", std::nullopt, std::nullopt}) ==
        s.encode_last({"beta alpha", std::nullopt, std::nullopt}));
}

TEST_CASE("context overflow reports its length") {
  StubBackend::Options o;
  o.max_context = 3;
  StubBackend s(o);
  try {
    s.encode_last({"a b c d e", std::nullopt, std::nullopt});
    FAIL("expected overflow");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find('5') != std::string::npos);
  }
}

TEST_CASE("stub generation emits the responder, one token per step") {
  StubBackend s;
  s.set_responder([](const EncodedInput&) { return std::string("Clarity"); });
  CHECK(s.generate({"x", std::nullopt, std::nullopt}, 10) == "Clarity");
  CHECK(s.generate({"x", std::nullopt, std::nullopt}, 0) == "");
  s.set_responder([](const EncodedInput&) { return std::string("a b c d"); });
  s.reset_counts();
  CHECK(s.generate({"x", std::nullopt, std::nullopt}, 2) == "a b");
  CHECK(s.counts().decode_steps == 2);
}

TEST_CASE("fine-tuning presets") {
  auto p = finetune_preset("eic", Approach::gen);
  CHECK(p.adapter_rank == 256);
  CHECK(p.adapter_alpha == 256);
  CHECK(p.adapter_dropout == doctest::Approx(0.1));
  p = finetune_preset("eic", Approach::xnet);
  CHECK(p.adapter_rank == 128);
  CHECK(finetune_preset("sdq", Approach::gen).adapter_rank == 64);
  CHECK(finetune_preset("sdq", Approach::seqc).adapter_rank == 32);
  CHECK(finetune_preset("ec", Approach::seqc).epochs == 5);
  CHECK(finetune_preset("tsec", Approach::seqc).epochs == 5);
  CHECK(finetune_preset("eic", Approach::seqc).epochs == 10);
}

TEST_CASE("fine-tuning config validation lists every violation") {
  FinetuneConfig c;
  c.mode = FinetuneMode::adapter;
  c.epochs = 0;
  try {
    validate(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 3);
  }
  c = {};
  c.mode = FinetuneMode::full;
  c.adapter_rank = 4;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("adapters train 2 r d weights per square map and freeze the base") {
  for (int r : {1, 4, 8}) {
    for (int d : {8, 32}) {
      TinyEncoder::Options o;
      o.dim = d;
      TinyEncoder enc(o);
      FinetuneConfig c;
      c.mode = FinetuneMode::adapter;
      c.adapter_rank = c.adapter_alpha = r;
      enc.apply_finetune_config(c);
      CHECK(trainable_count(enc.parameters()) == 2 * r * d);
    }
  }
  TinyEncoder::Options o;
  o.dim = 16;
  o.output_vocab = {"Claim", "Other", "Clarity"};
  TinyEncoder gen(o);
  FinetuneConfig c;
  c.mode = FinetuneMode::adapter;
  c.adapter_rank = c.adapter_alpha = 2;
  gen.apply_finetune_config(c);
  const auto vocab = gen.parameters().back().value.rows();
  CHECK(trainable_count(gen.parameters()) == 2 * 2 * 16 + 2 * (16 + vocab));
  c = {};
  c.mode = FinetuneMode::full;
  gen.apply_finetune_config(c);
  Eigen::Index total = 0;
  for (const auto& p : gen.parameters()) total += p.value.size();
  CHECK(trainable_count(gen.parameters()) == total);

  o = {};
  o.projection = false;
  TinyEncoder bare(o);
  c = {};
  c.mode = FinetuneMode::adapter;
  c.adapter_rank = c.adapter_alpha = 2;
  CHECK_THROWS_AS(apply_finetune_config(bare, c), ModelError);
  StubBackend stub;
  CHECK_THROWS_AS(apply_finetune_config(stub, c), ModelError);
}

TEST_CASE("tiny encoder initial weights depend only on the seed") {
  TinyEncoder::Options o;
  o.seed = 5;
  TinyEncoder a(o), b(o);
  const EncodedInput x{"some words here", std::nullopt, std::nullopt};
  CHECK(a.encode_last(x) == b.encode_last(x));
  o.seed = 6;
  TinyEncoder c(o);
  CHECK(a.encode_last(x) != c.encode_last(x));
}

TEST_CASE("remote request wire format") {
  check_golden("remote_request.json", build_remote_request("llama-2-70b", "OLD: a\nNEW: b\nRESPONSE:", 10) + "\n");
  CHECK(parse_remote_response(R"({"text":" Clarity"})") == " Clarity");
  CHECK_THROWS_AS(parse_remote_response("not json"), ModelError);
  CHECK_THROWS_AS(parse_remote_response(R"({"output":"x"})"), ModelError);
}

namespace {

/// Loopback endpoint failing the first `failures` requests with HTTP 503.
struct Endpoint {
  httplib::Server server;
  std::thread thread;
  std::atomic<int> calls{0};
  int port = 0;
  std::string last_body;
  std::string last_auth;

  explicit Endpoint(int failures) {
    server.Post("/v1/generate", [this, failures](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (++calls <= failures) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"text":"Claim"})", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Endpoint() {
    server.stop();
    thread.join();
  }
  RemoteSettings settings() const {
    RemoteSettings s;
    s.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/generate";
    s.token = "secret-token";
    s.backoff = std::chrono::milliseconds(1);
    s.timeout = std::chrono::seconds(5);
    return s;
  }
};

ModelInfo remote_model() {
  ModelInfo m;
  m.name = "remote-model";
  return m;
}

}  // namespace

TEST_CASE("remote generation round trip with retries") {
  Endpoint ep(2);
  RemoteGenerator g(remote_model(), ep.settings());
  CHECK(g.generate({"prompt", std::nullopt, std::nullopt}, 10) == "Claim");
  CHECK(ep.calls == 3);
  CHECK(ep.last_auth == "Bearer secret-token");
  const auto body = nlohmann::json::parse(ep.last_body);
  CHECK(body["model"] == "remote-model");
  CHECK(body["max_tokens"] == 10);
  CHECK(body["temperature"] == 0);
}

TEST_CASE("remote failures surface the attempt count without the token") {
  Endpoint ep(100);
  auto s = ep.settings();
  s.max_attempts = 3;
  RemoteGenerator g(remote_model(), s);
  try {
    g.generate({"prompt", std::nullopt, std::nullopt}, 10);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
    CHECK(std::string(e.what()).find("secret-token") == std::string::npos);
  }
  CHECK(ep.calls == 3);
  CHECK_THROWS_AS(RemoteGenerator(remote_model(), RemoteSettings{}), ConfigError);
}
