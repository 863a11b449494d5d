#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eic/approaches.hpp"
#include "eic/corpus.hpp"

namespace eic {

/// Pre-alignment settings. These are reconstructed defaults, not published values.
struct AlignmentParams {
  double jaccard_threshold = 0.5;
  int window = 10;

  friend bool operator==(const AlignmentParams&, const AlignmentParams&) = default;
};

enum class PairStatus { unchanged, modified };
enum class Stage { prealign, classifier };

std::string_view to_string(PairStatus s);
std::string_view to_string(Stage s);

struct AlignedPair {
  int old_index = 0;
  int new_index = 0;
  PairStatus status = PairStatus::unchanged;
  Stage stage = Stage::prealign;
  double score = 0.0;  // Jaccard for prealign, margin for the classifier stage

  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct AlignmentResult {
  std::vector<AlignedPair> pairs;  // sorted by old_index
  std::vector<int> added;          // new indices, ascending
  std::vector<int> deleted;        // old indices, ascending
  /// (old, new) pairs where an unmatched sentence looks like part of a split or merge.
  std::vector<std::pair<int, int>> suspected_splits;

  /// Throws Error(internal) unless every index sits in exactly one of pairs/added/deleted and
  /// the mapping is injective.
  void check(std::size_t n_old, std::size_t n_new) const;

  friend bool operator==(const AlignmentResult&, const AlignmentResult&) = default;
};

/// NFC, whitespace collapsed and trimmed, Unicode case-folded.
std::string normalize_sentence(std::string_view s);

/// |A ∩ B| / |A ∪ B| over token sets of the normalized sentences (1 when both are empty).
double token_jaccard(std::string_view a, std::string_view b);

/// Stage 1: unique normalized exact matches as monotone anchors, then greedy windowed
/// Jaccard matching. Unmatched sentences are reported as added/deleted.
AlignmentResult prealign(std::span<const std::string> old_sentences, std::span<const std::string> new_sentences,
                         const AlignmentParams& params = {});

/// Scores whether two sentences are versions of each other; positive margin means aligned.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual double margin(std::string_view old_sentence, std::string_view new_sentence) = 0;
};

/// SeqC classifier over the revision-alignment task: logit[aligned] - logit[unrelated].
class ClassifierPairScorer final : public PairScorer {
 public:
  ClassifierPairScorer(const Classifier& classifier, Backend& backend);
  double margin(std::string_view old_sentence, std::string_view new_sentence) override;

 private:
  const Classifier& classifier_;
  Backend& backend_;
  Eigen::Index aligned_ = 0, unrelated_ = 1;
};

/// Stage 2: windowed candidates among unmatched sentences, accepted greedily by descending
/// margin subject to injectivity and monotonicity.
AlignmentResult classify_residual(const AlignmentResult& partial, std::span<const std::string> old_sentences,
                                  std::span<const std::string> new_sentences, PairScorer& scorer,
                                  const AlignmentParams& params = {});

/// Both stages (stage 2 skipped when `scorer` is null).
AlignmentResult align(std::span<const std::string> old_sentences, std::span<const std::string> new_sentences,
                      PairScorer* scorer, const AlignmentParams& params = {});

/// Modify for modified pairs, Add for added, Delete for deleted, in new-document order
/// (deleted sentences placed after their preceding old neighbour).
std::vector<EditSample> derive_edits(const AlignmentResult& result, const DocumentRevision& doc);

nlohmann::ordered_json to_json(const AlignmentResult& r);
AlignmentResult alignment_from_json(const nlohmann::json& j);

}  // namespace eic
