#include "eic/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "eic/error.hpp"

namespace eic {

std::string_view to_string(PairStatus s) { return s == PairStatus::unchanged ? "unchanged" : "modified"; }
std::string_view to_string(Stage s) { return s == Stage::prealign ? "prealign" : "classifier"; }

void AlignmentResult::check(std::size_t n_old, std::size_t n_new) const {
  std::vector<int> old_seen(n_old, 0), new_seen(n_new, 0);
  auto mark = [](std::vector<int>& seen, int i, const char* side) {
    if (i < 0 || static_cast<std::size_t>(i) >= seen.size()) {
      throw Error(ErrorKind::internal, std::string(side) + " index out of range in alignment");
    }
    ++seen[static_cast<std::size_t>(i)];
  };
  for (const auto& p : pairs) {
    mark(old_seen, p.old_index, "old");
    mark(new_seen, p.new_index, "new");
  }
  for (int i : deleted) mark(old_seen, i, "old");
  for (int j : added) mark(new_seen, j, "new");
  for (int c : old_seen) {
    if (c != 1) throw Error(ErrorKind::internal, "alignment does not partition the old sentences");
  }
  for (int c : new_seen) {
    if (c != 1) throw Error(ErrorKind::internal, "alignment does not partition the new sentences");
  }
}

std::string normalize_sentence(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::internal, "ICU NFC normalizer unavailable");
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw DataError("sentence is not valid Unicode");
  normalized.foldCase();
  std::string folded;
  normalized.toUTF8String(folded);

  std::string out;
  bool space = false;
  for (char c : folded) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

namespace {

std::set<std::string> token_set(std::string_view s) {
  std::set<std::string> out;
  for (auto& t : tokenize(normalize_sentence(s))) out.insert(std::move(t.text));
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

/// Longest strictly increasing subsequence of new indices over pairs sorted by old index.
std::vector<std::pair<int, int>> monotone_subset(const std::vector<std::pair<int, int>>& sorted) {
  const auto n = sorted.size();
  std::vector<std::size_t> tails, prev(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    auto it = std::lower_bound(tails.begin(), tails.end(), sorted[k].second,
                               [&](std::size_t t, int v) { return sorted[t].second < v; });
    if (it != tails.begin()) prev[k] = *(it - 1);
    if (it == tails.end()) tails.push_back(k);
    else *it = k;
  }
  std::vector<std::pair<int, int>> out;
  for (std::size_t k = tails.empty() ? n : tails.back(); k != n; k = prev[k]) out.push_back(sorted[k]);
  std::reverse(out.begin(), out.end());
  return out;
}

/// Tracks accepted pairs and answers window / crossing queries.
class PairBook {
 public:
  PairBook(std::size_t n_old, std::size_t n_new) : old_to_new_(n_old, -1), new_to_old_(n_new, -1) {}

  bool old_free(int i) const { return old_to_new_[static_cast<std::size_t>(i)] < 0; }
  bool new_free(int j) const { return new_to_old_[static_cast<std::size_t>(j)] < 0; }

  void add(int i, int j) {
    old_to_new_[static_cast<std::size_t>(i)] = j;
    new_to_old_[static_cast<std::size_t>(j)] = i;
    by_old_.emplace(i, j);
  }

  /// Nearest accepted pair with old index < i, or (-1, -1).
  std::pair<int, int> preceding(int i) const {
    auto it = by_old_.lower_bound(i);
    if (it == by_old_.begin()) return {-1, -1};
    --it;
    return *it;
  }

  /// True when (i, j) keeps the accepted pairs monotone.
  bool fits(int i, int j) const {
    auto after = by_old_.upper_bound(i);
    if (after != by_old_.end() && after->second <= j) return false;
    if (after == by_old_.begin()) return true;
    auto before = std::prev(after);
    return before->second < j;
  }

  bool within(int i, int j, int window) const {
    const auto [ia, ja] = preceding(i);
    return std::abs((i - ia) - (j - ja)) <= window;
  }

  const std::map<int, int>& pairs() const { return by_old_; }

 private:
  std::vector<int> old_to_new_, new_to_old_;
  std::map<int, int> by_old_;
};

struct Candidate {
  double score;
  int i, j;
};

/// Highest score first; ties by (old, new) index.
void rank(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.score, a.i, a.j) < std::tie(a.score, b.i, b.j);
  });
}

AlignmentResult finish(const PairBook& book, const std::map<std::pair<int, int>, AlignedPair>& meta,
                       std::span<const std::string> old_s, std::span<const std::string> new_s) {
  AlignmentResult r;
  for (const auto& [i, j] : book.pairs()) r.pairs.push_back(meta.at({i, j}));
  for (int i = 0; i < static_cast<int>(old_s.size()); ++i) {
    if (book.old_free(i)) r.deleted.push_back(i);
  }
  for (int j = 0; j < static_cast<int>(new_s.size()); ++j) {
    if (book.new_free(j)) r.added.push_back(j);
  }
  // An unmatched sentence mostly contained in a neighbouring modified partner hints at a split
  // (added) or merge (deleted).
  auto contained = [](std::string_view part, std::string_view whole) {
    const auto a = token_set(part), b = token_set(whole);
    if (a.empty()) return false;
    std::size_t common = 0;
    for (const auto& t : a) common += b.count(t);
    return 2 * common >= a.size();
  };
  std::map<int, int> new_to_old;
  for (const auto& [i, j] : book.pairs()) new_to_old[j] = i;
  for (int j : r.added) {
    for (int nj : {j - 1, j + 1}) {
      auto it = new_to_old.find(nj);
      if (it == new_to_old.end() || meta.at({it->second, nj}).status != PairStatus::modified) continue;
      if (contained(new_s[static_cast<std::size_t>(j)], old_s[static_cast<std::size_t>(it->second)])) {
        r.suspected_splits.emplace_back(it->second, j);
        break;
      }
    }
  }
  for (int i : r.deleted) {
    for (int ni : {i - 1, i + 1}) {
      auto it = book.pairs().find(ni);
      if (it == book.pairs().end() || meta.at({ni, it->second}).status != PairStatus::modified) continue;
      if (contained(old_s[static_cast<std::size_t>(i)], new_s[static_cast<std::size_t>(it->second)])) {
        r.suspected_splits.emplace_back(i, it->second);
        break;
      }
    }
  }
  std::sort(r.suspected_splits.begin(), r.suspected_splits.end());
  return r;
}

AlignedPair aligned_pair(int i, int j, Stage stage, double score, std::span<const std::string> old_s,
                        std::span<const std::string> new_s) {
  const bool same = old_s[static_cast<std::size_t>(i)] == new_s[static_cast<std::size_t>(j)];
  return {i, j, same ? PairStatus::unchanged : PairStatus::modified, stage, score};
}

}  // namespace

double token_jaccard(std::string_view a, std::string_view b) { return jaccard(token_set(a), token_set(b)); }

AlignmentResult prealign(std::span<const std::string> old_s, std::span<const std::string> new_s,
                         const AlignmentParams& params) {
  const int n_old = static_cast<int>(old_s.size()), n_new = static_cast<int>(new_s.size());
  PairBook book(old_s.size(), new_s.size());
  std::map<std::pair<int, int>, AlignedPair> meta;

  // Unique normalized exact matches.
  std::map<std::string, std::pair<int, int>> old_key, new_key;  // key -> (count, index)
  for (int i = 0; i < n_old; ++i) {
    auto& e = old_key[normalize_sentence(old_s[static_cast<std::size_t>(i)])];
    e = {e.first + 1, i};
  }
  for (int j = 0; j < n_new; ++j) {
    auto& e = new_key[normalize_sentence(new_s[static_cast<std::size_t>(j)])];
    e = {e.first + 1, j};
  }
  std::vector<std::pair<int, int>> exact;
  for (const auto& [key, o] : old_key) {
    auto it = new_key.find(key);
    if (o.first == 1 && it != new_key.end() && it->second.first == 1) exact.emplace_back(o.second, it->second.second);
  }
  std::sort(exact.begin(), exact.end());
  for (const auto& [i, j] : monotone_subset(exact)) {
    book.add(i, j);
    meta[{i, j}] = aligned_pair(i, j, Stage::prealign, 1.0, old_s, new_s);
  }

  // Windowed Jaccard among the rest, relative to the exact anchors.
  const PairBook anchors = book;
  std::vector<std::set<std::string>> old_tokens(old_s.size()), new_tokens(new_s.size());
  for (int i = 0; i < n_old; ++i) old_tokens[static_cast<std::size_t>(i)] = token_set(old_s[static_cast<std::size_t>(i)]);
  for (int j = 0; j < n_new; ++j) new_tokens[static_cast<std::size_t>(j)] = token_set(new_s[static_cast<std::size_t>(j)]);
  std::vector<Candidate> candidates;
  for (int i = 0; i < n_old; ++i) {
    if (!anchors.old_free(i)) continue;
    for (int j = 0; j < n_new; ++j) {
      if (!anchors.new_free(j) || !anchors.within(i, j, params.window) || !anchors.fits(i, j)) continue;
      const double s = jaccard(old_tokens[static_cast<std::size_t>(i)], new_tokens[static_cast<std::size_t>(j)]);
      if (s >= params.jaccard_threshold) candidates.push_back({s, i, j});
    }
  }
  rank(candidates);
  for (const auto& c : candidates) {
    if (!book.old_free(c.i) || !book.new_free(c.j) || !book.fits(c.i, c.j)) continue;
    book.add(c.i, c.j);
    meta[{c.i, c.j}] = aligned_pair(c.i, c.j, Stage::prealign, c.score, old_s, new_s);
  }
  return finish(book, meta, old_s, new_s);
}

ClassifierPairScorer::ClassifierPairScorer(const Classifier& classifier, Backend& backend)
    : classifier_(classifier), backend_(backend) {
  if (classifier_.config().approach != Approach::seqc) {
    throw ModelError("the alignment classifier must be a SeqC checkpoint");
  }
  const auto& labels = classifier_.task().label_set;
  const auto a = labels.index_of("aligned");
  const auto u = labels.index_of("unrelated");
  if (labels.k() != 2 || !a || !u) throw ModelError("the alignment classifier needs labels {aligned, unrelated}");
  aligned_ = static_cast<Eigen::Index>(*a);
  unrelated_ = static_cast<Eigen::Index>(*u);
}

double ClassifierPairScorer::margin(std::string_view old_sentence, std::string_view new_sentence) {
  EditSample s;
  s.old_text = std::string(old_sentence);
  s.new_text = std::string(new_sentence);
  s.action = Action::modify;
  const auto p = classifier_.predict(backend_, s);
  return (*p.logits)(aligned_) - (*p.logits)(unrelated_);
}

AlignmentResult classify_residual(const AlignmentResult& partial, std::span<const std::string> old_s,
                                  std::span<const std::string> new_s, PairScorer& scorer,
                                  const AlignmentParams& params) {
  partial.check(old_s.size(), new_s.size());
  PairBook book(old_s.size(), new_s.size());
  std::map<std::pair<int, int>, AlignedPair> meta;
  for (const auto& p : partial.pairs) {
    book.add(p.old_index, p.new_index);
    meta[{p.old_index, p.new_index}] = p;
  }
  std::vector<Candidate> candidates;
  for (int i : partial.deleted) {
    for (int j : partial.added) {
      if (!book.within(i, j, params.window) || !book.fits(i, j)) continue;
      const double m = scorer.margin(old_s[static_cast<std::size_t>(i)], new_s[static_cast<std::size_t>(j)]);
      if (!std::isfinite(m)) throw NumericError("pair scorer returned a non-finite margin");
      if (m > 0.0) candidates.push_back({m, i, j});
    }
  }
  rank(candidates);
  for (const auto& c : candidates) {
    if (!book.old_free(c.i) || !book.new_free(c.j) || !book.fits(c.i, c.j)) continue;
    book.add(c.i, c.j);
    meta[{c.i, c.j}] = aligned_pair(c.i, c.j, Stage::classifier, c.score, old_s, new_s);
  }
  return finish(book, meta, old_s, new_s);
}

AlignmentResult align(std::span<const std::string> old_s, std::span<const std::string> new_s, PairScorer* scorer,
                      const AlignmentParams& params) {
  auto r = prealign(old_s, new_s, params);
  if (scorer) r = classify_residual(r, old_s, new_s, *scorer, params);
  r.check(old_s.size(), new_s.size());
  return r;
}

std::vector<EditSample> derive_edits(const AlignmentResult& result, const DocumentRevision& doc) {
  const auto& old_s = doc.old_sentences;
  const auto& new_s = doc.new_sentences;
  result.check(old_s.size(), new_s.size());
  std::vector<EditSample> out;
  auto emit = [&](std::optional<int> i, std::optional<int> j) {
    EditSample e;
    e.doc_id = doc.doc_id;
    e.edit_id = doc.doc_id + "-" + std::to_string(out.size());
    if (i) {
      e.old_text = old_s[static_cast<std::size_t>(*i)];
      e.old_index = *i;
    }
    if (j) {
      e.new_text = new_s[static_cast<std::size_t>(*j)];
      e.new_index = *j;
    }
    e.action = i && j ? Action::modify : (j ? Action::add : Action::remove);
    out.push_back(std::move(e));
  };
  std::size_t d = 0, a = 0;
  auto flush = [&](int old_limit, int new_limit) {
    while (d < result.deleted.size() && result.deleted[d] < old_limit) emit(result.deleted[d++], std::nullopt);
    while (a < result.added.size() && result.added[a] < new_limit) emit(std::nullopt, result.added[a++]);
  };
  for (const auto& p : result.pairs) {
    flush(p.old_index, p.new_index);
    if (p.status == PairStatus::modified) emit(p.old_index, p.new_index);
  }
  flush(static_cast<int>(old_s.size()), static_cast<int>(new_s.size()));
  return out;
}

nlohmann::ordered_json to_json(const AlignmentResult& r) {
  nlohmann::ordered_json j;
  auto& pairs = j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"old", p.old_index},
                     {"new", p.new_index},
                     {"status", to_string(p.status)},
                     {"stage", to_string(p.stage)},
                     {"score", p.score}});
  }
  j["added"] = r.added;
  j["deleted"] = r.deleted;
  auto& splits = j["suspected_splits"] = nlohmann::ordered_json::array();
  for (const auto& [o, n] : r.suspected_splits) splits.push_back({o, n});
  return j;
}

AlignmentResult alignment_from_json(const nlohmann::json& j) {
  try {
    AlignmentResult r;
    for (const auto& p : j.at("pairs")) {
      AlignedPair a;
      a.old_index = p.at("old").get<int>();
      a.new_index = p.at("new").get<int>();
      a.status = p.at("status").get<std::string>() == "unchanged" ? PairStatus::unchanged : PairStatus::modified;
      a.stage = p.at("stage").get<std::string>() == "prealign" ? Stage::prealign : Stage::classifier;
      a.score = p.at("score").get<double>();
      r.pairs.push_back(a);
    }
    r.added = j.at("added").get<std::vector<int>>();
    r.deleted = j.at("deleted").get<std::vector<int>>();
    for (const auto& s : j.at("suspected_splits")) r.suspected_splits.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed alignment record: ") + e.what());
  }
}

}  // namespace eic
