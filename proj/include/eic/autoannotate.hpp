#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eic/alignment.hpp"
#include "eic/approaches.hpp"
#include "eic/corpus.hpp"
#include "eic/error.hpp"
#include "eic/evaluation.hpp"

namespace eic {

inline constexpr std::string_view kPipelineVersion = "1.0";

struct RevisionCounts {
  std::size_t words = 0;      // word tokens of the new version
  std::size_t sentences = 0;  // sentences of the new version
  std::size_t old_sentences = 0;
  std::size_t edits = 0;

  friend bool operator==(const RevisionCounts&, const RevisionCounts&) = default;
};

struct Provenance {
  std::string intent_model;
  std::string alignment_model;  // empty when only pre-alignment ran
  std::string pipeline_version{kPipelineVersion};

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct AnnotatedRevision {
  std::string doc_id;
  DomainCategory domain_category = DomainCategory::other;
  std::vector<EditSample> edits;  // every edit carries action and intent
  RevisionCounts counts;
  Provenance provenance;
  std::optional<std::vector<std::string>> review_scores_old;
  std::optional<std::vector<std::string>> review_scores_new;

  friend bool operator==(const AnnotatedRevision&, const AnnotatedRevision&) = default;
};

/// Assigns an intent to each edit.
class IntentLabeler {
 public:
  virtual ~IntentLabeler() = default;
  virtual std::vector<std::string> label(std::span<const EditSample> edits) = 0;
  /// Identifier recorded in provenance.
  virtual std::string id() const = 0;
};

/// SeqC classifier from a checkpoint.
class ClassifierLabeler final : public IntentLabeler {
 public:
  /// Throws ModelError unless the classifier is SeqC.
  ClassifierLabeler(const Classifier& classifier, Backend& backend, std::string id);
  std::vector<std::string> label(std::span<const EditSample> edits) override;
  std::string id() const override { return id_; }

 private:
  const Classifier& classifier_;
  Backend& backend_;
  std::string id_;
};

struct AnnotateConfig {
  AlignmentParams alignment;
  /// Edits labelled per classifier batch, pooled across documents.
  std::size_t batch_size = 64;
  /// Threads for document-parallel pre-alignment; output order does not depend on it.
  std::size_t jobs = 1;
};

struct DocumentFailure {
  std::string doc_id;
  ErrorKind kind = ErrorKind::internal;
  std::string message;
};

struct AnnotateOutput {
  std::vector<AnnotatedRevision> documents;  // input order, failures removed
  std::vector<DocumentFailure> failures;
};

/// Words in `text`: tokens containing at least one letter or digit.
std::size_t count_words(std::string_view text);

/// Aligns each revision, derives edits and labels their intents. A failing document is
/// recorded in `failures` and the rest continue.
AnnotateOutput annotate(std::span<const DocumentRevision> revisions, const AnnotateConfig& cfg,
                        IntentLabeler& labeler, PairScorer* alignment_scorer = nullptr,
                        const std::string& alignment_model = {});

std::string emit_annotated(const AnnotatedRevision& doc);
AnnotatedRevision parse_annotated_line(std::string_view line, std::size_t line_no = 0);
std::vector<AnnotatedRevision> parse_annotated(std::string_view jsonl);
std::vector<AnnotatedRevision> load_annotated(const std::filesystem::path& path);

/// Writes annotated.jsonl, edits.jsonl, failures.jsonl and manifest.json under `dir`.
void write_corpus(const std::filesystem::path& dir, const AnnotateOutput& out, const nlohmann::json& manifest_extra);

struct CategoryStats {
  std::string category;  // domain name or "overall"
  std::size_t documents = 0;
  std::size_t edits = 0;
  double avg_words = 0.0;
  double avg_sentences = 0.0;
  double avg_edits = 0.0;
};

/// One row per domain category present (kAllDomains order) followed by "overall".
std::vector<CategoryStats> corpus_stats(std::span<const AnnotatedRevision> docs);
std::string render_stats(std::span<const CategoryStats> rows);

inline const std::vector<std::string> kWorksheetHeader = {"doc_id", "edit_id", "action", "old_text",
                                                          "new_text", "model_intent", "human_action",
                                                          "human_intent"};

/// Uniform seeded sample of documents (kept in corpus order) as a CSV worksheet with blank
/// human columns. Throws DataError when n_docs exceeds the corpus.
std::string sample_for_review(std::span<const AnnotatedRevision> docs, std::size_t n_docs, std::uint64_t seed);

struct ReviewScores {
  std::size_t rows = 0;  // scored rows (both human columns filled)
  double action_accuracy = 0.0;
  MetricsReport intent;  // accuracy, macro-F1 and per-class P/R/F1 of model vs human intents
};

/// Scores a filled worksheet; rows with blank human columns are skipped.
ReviewScores score_worksheet(std::string_view csv);
/// Table with Acc., M. F1 and per-label P/R/F1 columns.
std::string render_review(const ReviewScores& s, const LabelSet& labels);

}  // namespace eic
