#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eic {

/// Ordered, validated set of class labels. Label strings are matched bit-exactly.
class LabelSet {
 public:
  /// Throws DataError unless names are unique, non-empty, mutually non-substring and k >= 2.
  explicit LabelSet(std::vector<std::string> names);

  static const LabelSet& edit_intents();

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t k() const noexcept { return names_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  const std::string& operator[](std::size_t i) const { return names_.at(i); }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> names_;
};

enum class Action { modify, add, remove };

std::string_view to_string(Action a);
std::optional<Action> parse_action(std::string_view s);

/// One sentence edit. Single-input samples carry only `new_text` and no action.
struct EditSample {
  std::string doc_id;
  std::string edit_id;
  std::optional<std::string> old_text;
  std::optional<std::string> new_text;
  std::optional<Action> action;
  std::optional<std::string> intent;
  /// Sentence positions in the old/new document, when known (alignment output).
  std::optional<int> old_index;
  std::optional<int> new_index;
  /// False when `action` was inferred at load time; emission then omits it again.
  bool action_given = true;

  friend bool operator==(const EditSample&, const EditSample&) = default;
};

/// Infers the action from text presence; throws DataError on a conflicting explicit action.
Action resolve_action(const EditSample& s);

/// Checks the text/action invariants and (when `labels` is set) intent membership.
void validate(const EditSample& s, const LabelSet* labels);

struct DatasetSplit {
  std::vector<EditSample> train;
  std::vector<EditSample> validation;
  std::vector<EditSample> test;
};

/// Throws DataError when splits share an edit_id.
void check_disjoint(const DatasetSplit& split);

enum class InputArity { pair, single };

struct TaskSpec {
  std::string task_id;
  InputArity input_arity = InputArity::pair;
  LabelSet label_set = LabelSet::edit_intents();
  std::string instruction_text;
};

/// Start offsets of `label` in `text`, counting only occurrences delimited by
/// non-alphanumeric characters (so "no" does not match inside "not").
std::vector<std::size_t> label_occurrences(std::string_view text, std::string_view label);

/// Throws DataError unless the instruction mentions every label exactly once.
void validate(const TaskSpec& task);

/// Built-in tasks: eic, sdq, tse, tuc, ec, tsec, ra (revision alignment pairs).
const std::vector<TaskSpec>& task_registry();
const TaskSpec& find_task(std::string_view task_id);

enum class DomainCategory { nlp, case_report, med, tool, nat, soc, other };

std::string_view to_string(DomainCategory c);
std::optional<DomainCategory> parse_domain(std::string_view s);
inline constexpr DomainCategory kAllDomains[] = {DomainCategory::nlp, DomainCategory::case_report,
                                                 DomainCategory::med, DomainCategory::tool,
                                                 DomainCategory::nat, DomainCategory::soc,
                                                 DomainCategory::other};

struct DocumentRevision {
  std::string doc_id;
  std::vector<std::string> old_sentences;
  std::vector<std::string> new_sentences;
  DomainCategory domain_category = DomainCategory::other;
  std::optional<std::vector<std::string>> review_scores_old;
  std::optional<std::vector<std::string>> review_scores_new;
  bool domain_given = true;

  friend bool operator==(const DocumentRevision&, const DocumentRevision&) = default;
};

enum class Schema { edits, singles, revisions };

// JSON-lines loaders. Errors carry the 1-based line number and offending field.
std::vector<EditSample> parse_edits(std::string_view jsonl, const LabelSet* labels);
std::vector<EditSample> parse_singles(std::string_view jsonl, const LabelSet* labels);
std::vector<DocumentRevision> parse_revisions(std::string_view jsonl);

std::vector<EditSample> load_edits(const std::filesystem::path& path, const LabelSet* labels);
std::vector<EditSample> load_singles(const std::filesystem::path& path, const LabelSet* labels);
std::vector<DocumentRevision> load_revisions(const std::filesystem::path& path);

/// Loads train/validation/test .jsonl files from a directory (missing files yield empty splits).
DatasetSplit load_split(const std::filesystem::path& dir, Schema schema, const LabelSet* labels);

std::string emit_edit(const EditSample& s);
std::string emit_single(const EditSample& s);
std::string emit_revision(const DocumentRevision& r);
std::string emit_edits(std::span<const EditSample> samples);
std::string emit_revisions(std::span<const DocumentRevision> docs);
void save_split(const std::filesystem::path& dir, const DatasetSplit& split, Schema schema);

/// All positives (label index 0) plus an equal-size uniform random subset of negatives,
/// in source order.
std::vector<EditSample> balance_binary_pairs(std::span<const EditSample> samples,
                                             const LabelSet& labels, std::uint64_t seed);

/// Per-label quotas by largest-remainder apportionment; members drawn uniformly per label.
/// Output keeps source order.
std::vector<EditSample> stratified_subsample(std::span<const EditSample> samples, std::size_t n,
                                             std::uint64_t seed);

/// Successive disjoint stratified draws, e.g. {1000, 2000} for validation and test.
std::vector<std::vector<EditSample>> stratified_partition(std::span<const EditSample> samples,
                                                          std::span<const std::size_t> sizes,
                                                          std::uint64_t seed);

/// Largest-remainder apportionment of n over the given counts (ties: lower index first).
std::vector<std::size_t> apportion(std::span<const std::size_t> counts, std::size_t n);

}  // namespace eic
