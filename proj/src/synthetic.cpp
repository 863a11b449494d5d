#include "eic/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "eic/util.hpp"

namespace eic {

std::string pseudo_word(std::size_t i) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  constexpr std::size_t syllables = 14 * 5;
  std::string w;
  for (int k = 0; k < 3; ++k) {
    const auto s = i % syllables;
    i /= syllables;
    w += consonants[s / 5];
    w += vowels[s % 5];
  }
  return w;
}

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : mix_{seed} {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(mix_.next() % n); }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }
  double uniform() { return static_cast<double>(mix_.next() >> 11) * 0x1.0p-53; }

 private:
  SplitMix64 mix_;
};

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s + " .";
}

constexpr std::size_t kFillerWords = 100;
constexpr std::size_t kMarkerBase = 100000;
constexpr std::size_t kMarkersPerClass = 3;

std::vector<std::string> filler(Rng& rng, int lo, int hi) {
  std::vector<std::string> words(static_cast<std::size_t>(rng.between(lo, hi)));
  for (auto& w : words) w = pseudo_word(rng.below(kFillerWords));
  return words;
}

}  // namespace

DatasetSplit synth_intent_dataset(std::size_t n_train, std::size_t n_validation, std::size_t n_test,
                                  std::uint64_t seed) {
  const auto labels = LabelSet::edit_intents();
  const auto k = labels.k();
  Rng rng(derive_seed(seed, "intent-data"));
  auto make = [&](std::size_t n, const std::string& prefix) {
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = i % k;
    for (std::size_t i = n; i > 1; --i) std::swap(classes[i - 1], classes[rng.below(i)]);
    std::vector<EditSample> out;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = classes[i];
      const auto marker = pseudo_word(kMarkerBase + c * kMarkersPerClass + rng.below(kMarkersPerClass));
      auto base = filler(rng, 6, 12);
      EditSample s;
      s.doc_id = prefix + "-doc" + std::to_string(i / 10);
      s.edit_id = prefix + "-" + std::to_string(i);
      s.intent = labels[c];
      auto marked = base;
      marked.insert(marked.begin() + static_cast<std::ptrdiff_t>(rng.below(marked.size() + 1)), marker);
      switch (rng.below(3)) {
        case 0:
          s.action = Action::modify;
          s.old_text = join(base);
          marked.erase(marked.begin() + static_cast<std::ptrdiff_t>(rng.below(marked.size())));
          if (std::find(marked.begin(), marked.end(), marker) == marked.end()) marked.push_back(marker);
          s.new_text = join(marked);
          break;
        case 1:
          s.action = Action::add;
          s.new_text = join(marked);
          break;
        default:
          s.action = Action::remove;
          s.old_text = join(marked);
          break;
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  DatasetSplit split;
  split.train = make(n_train, "train");
  split.validation = make(n_validation, "validation");
  split.test = make(n_test, "test");
  return split;
}

SyntheticRevision synth_revision(const std::string& doc_id, std::uint64_t seed, const RevisionSynthOptions& opts) {
  Rng rng(derive_seed(seed, "revision"));
  constexpr std::size_t kVocab = 4000;
  std::set<std::string> used;
  auto sentence = [&] {
    for (;;) {
      std::vector<std::string> words(static_cast<std::size_t>(rng.between(8, 20)));
      for (auto& w : words) w = pseudo_word(rng.below(kVocab));
      auto s = join(words);
      if (used.insert(s).second) return s;
    }
  };
  std::size_t fresh_word = 0;
  auto perturb = [&](const std::string& s) {
    for (;;) {
      auto words = tokenize(s);
      std::vector<std::string> w;
      for (std::size_t t = 0; t + 1 < words.size(); ++t) w.push_back(words[t].text);
      const int ops = rng.between(1, 2);
      for (int o = 0; o < ops; ++o) {
        const auto pos = rng.below(w.size());
        switch (rng.below(3)) {
          case 0: w[pos] = pseudo_word(kVocab + fresh_word++); break;
          case 1: w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos), pseudo_word(kVocab + fresh_word++)); break;
          default:
            if (w.size() > 6) w.erase(w.begin() + static_cast<std::ptrdiff_t>(pos));
            else w[pos] = pseudo_word(kVocab + fresh_word++);
        }
      }
      auto out = join(w);
      if (out != s && token_jaccard(s, out) >= 0.5 && used.insert(out).second) return out;
    }
  };
  auto paraphrase = [&](const std::string& s) {
    for (;;) {
      auto words = tokenize(s);
      const auto keyword = words[rng.below(words.size() - 1)].text;
      std::vector<std::string> w(static_cast<std::size_t>(rng.between(8, 16)));
      for (auto& x : w) x = pseudo_word(kVocab + fresh_word++);
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(rng.below(w.size() + 1)), keyword);
      auto out = join(w);
      if (token_jaccard(s, out) < 0.5 && used.insert(out).second) return out;
    }
  };

  const auto intents = LabelSet::edit_intents().names();
  SyntheticRevision r;
  r.doc.doc_id = doc_id;
  const int n = rng.between(opts.min_sentences, opts.max_sentences);
  for (int i = 0; i < n; ++i) r.doc.old_sentences.push_back(sentence());

  auto edit = [&](Action a, std::optional<int> oi, std::optional<int> ni) {
    EditSample e;
    e.doc_id = doc_id;
    e.edit_id = doc_id + "-g" + std::to_string(r.script.size());
    e.action = a;
    e.intent = intents[rng.below(intents.size())];
    if (oi) {
      e.old_index = *oi;
      e.old_text = r.doc.old_sentences[static_cast<std::size_t>(*oi)];
    }
    if (ni) {
      e.new_index = *ni;
      e.new_text = r.doc.new_sentences[static_cast<std::size_t>(*ni)];
    }
    r.script.push_back(std::move(e));
  };
  auto maybe_add = [&] {
    if (rng.uniform() >= opts.p_add) return;
    r.doc.new_sentences.push_back(sentence());
    edit(Action::add, std::nullopt, static_cast<int>(r.doc.new_sentences.size() - 1));
  };
  for (int i = 0; i < n; ++i) {
    maybe_add();
    const double u = rng.uniform();
    const auto& s = r.doc.old_sentences[static_cast<std::size_t>(i)];
    if (u < opts.p_delete) {
      edit(Action::remove, i, std::nullopt);
      continue;
    }
    const int j = static_cast<int>(r.doc.new_sentences.size());
    r.pairs.emplace(i, j);
    if (u < opts.p_delete + opts.p_modify) {
      const bool heavy = rng.uniform() < opts.paraphrase_rate;
      r.doc.new_sentences.push_back(heavy ? paraphrase(s) : perturb(s));
      r.modified_texts.emplace(s, r.doc.new_sentences.back());
      edit(Action::modify, i, j);
    } else {
      r.doc.new_sentences.push_back(s);
    }
  }
  maybe_add();
  return r;
}

std::vector<SyntheticRevision> synth_corpus(std::size_t n_docs, std::uint64_t seed, const RevisionSynthOptions& opts) {
  static const std::vector<std::string> decisions = {"reject", "approve-with-reservations", "approve"};
  Rng rng(derive_seed(seed, "corpus"));
  std::vector<SyntheticRevision> out;
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto r = synth_revision("doc" + std::to_string(d), derive_seed(seed, "doc", d), opts);
    r.doc.domain_category = kAllDomains[rng.below(std::size(kAllDomains))];
    std::vector<std::string> old_s(static_cast<std::size_t>(rng.between(2, 3))), new_s(old_s.size());
    for (auto& s : old_s) s = decisions[rng.below(2)];
    for (auto& s : new_s) s = decisions[rng.below(3)];
    r.doc.review_scores_old = old_s;
    r.doc.review_scores_new = new_s;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EditKey> edit_keys(const std::vector<EditSample>& edits, bool with_intent) {
  std::vector<EditKey> keys;
  for (const auto& e : edits) {
    keys.emplace_back(std::string(to_string(*e.action)), e.old_index.value_or(-1), e.new_index.value_or(-1),
                      e.old_text.value_or(""), e.new_text.value_or(""), with_intent ? e.intent.value_or("") : "");
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace eic
