#include "eic/stub_backend.hpp"

#include <cmath>
#include <sstream>

#include "eic/error.hpp"
#include "eic/util.hpp"

namespace eic {

namespace {
constexpr std::string_view kNullToken = "\x01<null>";
constexpr double kPositionScale = 0.1;
}  // namespace

StubBackend::StubBackend(Options opts) : opts_(opts) {
  if (opts_.dim <= 0) throw ConfigError({"stub dimension must be positive"});
  info_ = {"stub", opts_.dim, opts_.arch, false, 1, opts_.max_context};
}

Eigen::VectorXd StubBackend::token_vector(std::string_view token) const {
  SplitMix64 mix{fnv1a64(token)};
  Eigen::VectorXd v(opts_.dim);
  for (int j = 0; j < opts_.dim; ++j) v[j] = mix.symmetric();
  return v;
}

Eigen::VectorXd StubBackend::null_vector() const { return token_vector(kNullToken); }

void StubBackend::spend() const {
  if (opts_.unit_cost.count() <= 0) return;
  const auto until = std::chrono::steady_clock::now() + opts_.unit_cost;
  while (std::chrono::steady_clock::now() < until) {
  }
}

Eigen::MatrixXd StubBackend::states(const std::vector<Token>& tokens) const {
  const int d = opts_.dim;
  const auto n = static_cast<Eigen::Index>(std::max<std::size_t>(tokens.size(), 1));
  Eigen::MatrixXd emb(d, n);
  if (tokens.empty()) emb.col(0) = null_vector();
  for (std::size_t t = 0; t < tokens.size(); ++t) emb.col(static_cast<Eigen::Index>(t)) = token_vector(tokens[t].text);

  Eigen::MatrixXd out(d, n);
  Eigen::VectorXd running = Eigen::VectorXd::Zero(d);
  const Eigen::VectorXd all_mean = emb.rowwise().mean();
  for (Eigen::Index t = 0; t < n; ++t) {
    running += emb.col(t);
    out.col(t) = opts_.arch == Architecture::encoder_only ? all_mean : Eigen::VectorXd(running / double(t + 1));
    for (int j = 0; j < d; ++j) {
      const double freq = std::pow(10000.0, -double(j) / d);
      out(j, t) += kPositionScale * std::sin(double(t + 1) * freq);
    }
  }
  return out;
}

Eigen::VectorXd StubBackend::encode_last(const EncodedInput& input) {
  const auto tokens = tokenize(input.text);
  check_context(info_, tokens.size());
  ++counts_.encode_passes;
  spend();
  const auto s = states(tokens);
  return opts_.arch == Architecture::encoder_only ? Eigen::VectorXd(s.col(0)) : Eigen::VectorXd(s.col(s.cols() - 1));
}

SpanEncoding StubBackend::encode_spans(const EncodedInput& input) {
  if (!input.old_segment_end || !input.new_segment_end) {
    throw ModelError("span encoding needs both segment offsets");
  }
  const auto tokens = tokenize(input.text);
  check_context(info_, tokens.size());
  ++counts_.encode_passes;
  spend();
  const auto s = states(tokens);
  const auto o = static_cast<Eigen::Index>(token_index_at(tokens, *input.old_segment_end));
  const auto n = static_cast<Eigen::Index>(token_index_at(tokens, *input.new_segment_end));
  return {s.col(o), s.col(n)};
}

std::string StubBackend::generate(const EncodedInput& input, int max_new_tokens) {
  check_context(info_, tokenize(input.text).size());
  std::vector<std::string> words;
  if (responder_) {
    std::istringstream in(responder_(input));
    for (std::string w; in >> w;) words.push_back(w);
  }
  std::string out;
  for (int step = 0; step < max_new_tokens; ++step) {
    ++counts_.decode_steps;
    spend();
    if (static_cast<std::size_t>(step) < words.size()) {
      if (!out.empty()) out += ' ';
      out += words[static_cast<std::size_t>(step)];
    }
  }
  return out;
}

}  // namespace eic
