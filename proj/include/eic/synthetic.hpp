#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eic/alignment.hpp"
#include "eic/corpus.hpp"

namespace eic {

/// Deterministic pseudo-word `i` built from syllables ("bakotu", ...).
std::string pseudo_word(std::size_t i);

/// Rule-generated edit-intent data: each sample's changed text carries a class marker word,
/// the rest is random filler. Classes are balanced. Single rule, so linearly separable.
DatasetSplit synth_intent_dataset(std::size_t n_train, std::size_t n_validation, std::size_t n_test,
                                  std::uint64_t seed);

struct RevisionSynthOptions {
  int min_sentences = 20;
  int max_sentences = 200;
  double p_modify = 0.12;
  double p_delete = 0.05;
  double p_add = 0.05;
  /// Share of modifications rewritten so heavily that token Jaccard falls below 0.5
  /// (the rewrite keeps one rare keyword of the original).
  double paraphrase_rate = 0.0;
};

struct SyntheticRevision {
  DocumentRevision doc;
  /// Ground-truth edits with intents (old/new indices set).
  std::vector<EditSample> script;
  /// Every true (old, new) correspondence, unchanged ones included.
  std::set<std::pair<int, int>> pairs;
  /// Text pairs of true modifications, for oracle scorers.
  std::set<std::pair<std::string, std::string>> modified_texts;
};

SyntheticRevision synth_revision(const std::string& doc_id, std::uint64_t seed, const RevisionSynthOptions& opts = {});

/// Documents across domain categories with review decisions.
std::vector<SyntheticRevision> synth_corpus(std::size_t n_docs, std::uint64_t seed, const RevisionSynthOptions& opts = {});

/// Scorer that knows the true modified pairs: margin +1 for them, -1 otherwise.
class OraclePairScorer final : public PairScorer {
 public:
  explicit OraclePairScorer(std::set<std::pair<std::string, std::string>> truth) : truth_(std::move(truth)) {}
  double margin(std::string_view o, std::string_view n) override {
    return truth_.count({std::string(o), std::string(n)}) ? 1.0 : -1.0;
  }

 private:
  std::set<std::pair<std::string, std::string>> truth_;
};

/// Canonical (action, old_index, new_index, old_text, new_text, intent) tuples, sorted.
using EditKey = std::tuple<std::string, int, int, std::string, std::string, std::string>;
std::vector<EditKey> edit_keys(const std::vector<EditSample>& edits, bool with_intent);

}  // namespace eic
