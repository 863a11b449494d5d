#include "eic/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "eic/error.hpp"
#include "eic/util.hpp"

namespace eic {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw DataError("a label set needs at least two labels");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw DataError("empty label name");
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (i == j) continue;
      if (names_[i] == names_[j]) throw DataError("duplicate label '" + names_[i] + "'");
      if (names_[j].find(names_[i]) != std::string::npos) {
        throw DataError("label '" + names_[i] + "' is a substring of '" + names_[j] + "'");
      }
    }
  }
}

const LabelSet& LabelSet::edit_intents() {
  static const LabelSet labels({"Grammar", "Clarity", "Fact/Evidence", "Claim", "Other"});
  return labels;
}

std::optional<std::size_t> LabelSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::modify: return "Modify";
    case Action::add: return "Add";
    case Action::remove: return "Delete";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view s) {
  if (s == "Modify") return Action::modify;
  if (s == "Add") return Action::add;
  if (s == "Delete") return Action::remove;
  return std::nullopt;
}

Action resolve_action(const EditSample& s) {
  if (!s.old_text && !s.new_text) throw DataError("edit has neither old nor new text", 0, "old/new");
  const Action inferred = !s.old_text ? Action::add : !s.new_text ? Action::remove : Action::modify;
  if (s.action && *s.action != inferred) {
    throw DataError("action " + std::string(to_string(*s.action)) +
                        " conflicts with text presence (implies " + std::string(to_string(inferred)) +
                        ")",
                    0, "action");
  }
  return inferred;
}

void validate(const EditSample& s, const LabelSet* labels) {
  if (s.action || s.old_text) resolve_action(s);
  else if (!s.new_text) throw DataError("sample has no text", 0, "text");
  if (labels && s.intent && !labels->contains(*s.intent)) {
    throw DataError("unknown label '" + *s.intent + "'", 0, "intent");
  }
}

void check_disjoint(const DatasetSplit& split) {
  std::unordered_set<std::string> seen;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    std::unordered_set<std::string> local;
    for (const auto& s : *part) local.insert(s.edit_id);
    for (const auto& id : local) {
      if (!seen.insert(id).second) throw DataError("edit_id '" + id + "' appears in two splits");
    }
  }
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80 || c == '_'; }

}  // namespace

std::vector<std::size_t> label_occurrences(std::string_view text, std::string_view label) {
  std::vector<std::size_t> out;
  if (label.empty()) return out;
  const bool word_start = is_word_char(static_cast<unsigned char>(label.front()));
  const bool word_end = is_word_char(static_cast<unsigned char>(label.back()));
  for (auto pos = text.find(label); pos != std::string_view::npos; pos = text.find(label, pos + 1)) {
    const auto end = pos + label.size();
    if (word_start && pos > 0 && is_word_char(static_cast<unsigned char>(text[pos - 1]))) continue;
    if (word_end && end < text.size() && is_word_char(static_cast<unsigned char>(text[end]))) continue;
    out.push_back(pos);
  }
  return out;
}

void validate(const TaskSpec& task) {
  for (const auto& name : task.label_set.names()) {
    const auto n = label_occurrences(task.instruction_text, name).size();
    if (n != 1) {
      throw DataError("instruction of task '" + task.task_id + "' mentions label '" + name + "' " +
                      std::to_string(n) + " times");
    }
  }
}

const std::vector<TaskSpec>& task_registry() {
  static const std::vector<TaskSpec> tasks = [] {
    const std::string tail = " The possible labels are: ";
    std::vector<TaskSpec> t{
        {"eic", InputArity::pair, LabelSet::edit_intents(),
         "Classify the intent of the following sentence edit." + tail +
             "Grammar, Clarity, Fact/Evidence, Claim, Other."},
        {"sdq", InputArity::pair, LabelSet({"yes", "no"}),
         "Classify whether the following two questions are duplicates." + tail + "yes, no."},
        {"tse", InputArity::pair, LabelSet({"yes", "no"}),
         "Classify whether the following two tweets are paraphrases." + tail + "yes, no."},
        {"tuc", InputArity::pair, LabelSet({"yes", "no"}),
         "Classify whether the following two tweets are paraphrases." + tail + "yes, no."},
        {"ec", InputArity::single,
         LabelSet({"anger", "fear", "joy", "love", "sadness", "surprise"}),
         "Classify the emotion of the following text." + tail +
             "anger, fear, joy, love, sadness, surprise."},
        {"tsec", InputArity::single, LabelSet({"neutral", "positive", "negative"}),
         "Classify the sentiment of the following text." + tail + "neutral, positive, negative."},
        {"ra", InputArity::pair, LabelSet({"aligned", "unrelated"}),
         "Classify whether the following two sentences are versions of each other." + tail +
             "aligned, unrelated."},
    };
    for (const auto& task : t) validate(task);
    return t;
  }();
  return tasks;
}

const TaskSpec& find_task(std::string_view task_id) {
  for (const auto& t : task_registry()) {
    if (t.task_id == task_id) return t;
  }
  throw DataError("unknown task '" + std::string(task_id) + "'");
}

std::string_view to_string(DomainCategory c) {
  switch (c) {
    case DomainCategory::nlp: return "nlp";
    case DomainCategory::case_report: return "case";
    case DomainCategory::med: return "med";
    case DomainCategory::tool: return "tool";
    case DomainCategory::nat: return "nat";
    case DomainCategory::soc: return "soc";
    case DomainCategory::other: return "other";
  }
  return "other";
}

std::optional<DomainCategory> parse_domain(std::string_view s) {
  for (auto c : kAllDomains) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

namespace {

const std::set<std::string, std::less<>> kDecisions{"reject", "approve-with-reservations",
                                                    "approve"};

std::optional<std::string> opt_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string", line, key);
  return it->get<std::string>();
}

std::string req_string(const json& j, const char* key, std::size_t line) {
  auto v = opt_string(j, key, line);
  if (!v) throw DataError(std::string("missing field '") + key + "'", line, key);
  return *v;
}

std::optional<int> opt_int(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw DataError(std::string("field '") + key + "' must be an integer", line, key);
  return it->get<int>();
}

std::vector<std::string> req_string_list(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw DataError(std::string("field '") + key + "' must be a list of strings", line, key);
  }
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw DataError(std::string("field '") + key + "' must contain strings", line, key);
    out.push_back(v.get<std::string>());
  }
  return out;
}

/// Calls `fn(json, line)` for every non-blank line; rethrows errors with the line number.
template <typename Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto raw = text.substr(pos, nl - pos);
    ++line;
    pos = nl + 1;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.find_first_not_of(" \t") == std::string_view::npos) {
      if (nl == text.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!j.is_object()) throw DataError("record is not a JSON object", line);
    try {
      fn(j, line);
    } catch (const DataError& e) {
      if (e.line() != 0) throw;
      throw DataError(e.what(), line, e.field());
    }
    if (nl == text.size()) break;
  }
}

}  // namespace

std::vector<EditSample> parse_edits(std::string_view jsonl, const LabelSet* labels) {
  std::vector<EditSample> out;
  for_each_record(jsonl, [&](const json& j, std::size_t line) {
    EditSample s;
    s.doc_id = req_string(j, "doc_id", line);
    s.edit_id = req_string(j, "edit_id", line);
    s.old_text = opt_string(j, "old", line);
    s.new_text = opt_string(j, "new", line);
    s.intent = opt_string(j, "intent", line);
    s.old_index = opt_int(j, "old_index", line);
    s.new_index = opt_int(j, "new_index", line);
    if (auto a = opt_string(j, "action", line)) {
      s.action = parse_action(*a);
      if (!s.action) throw DataError("unknown action '" + *a + "'", line, "action");
    } else {
      s.action_given = false;
    }
    s.action = resolve_action(s);
    validate(s, labels);
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<EditSample> parse_singles(std::string_view jsonl, const LabelSet* labels) {
  std::vector<EditSample> out;
  for_each_record(jsonl, [&](const json& j, std::size_t line) {
    EditSample s;
    s.edit_id = req_string(j, "id", line);
    s.new_text = req_string(j, "text", line);
    s.intent = opt_string(j, "label", line);
    s.action_given = false;
    if (labels && s.intent && !labels->contains(*s.intent)) {
      throw DataError("unknown label '" + *s.intent + "'", line, "label");
    }
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<DocumentRevision> parse_revisions(std::string_view jsonl) {
  std::vector<DocumentRevision> out;
  for_each_record(jsonl, [&](const json& j, std::size_t line) {
    DocumentRevision r;
    r.doc_id = req_string(j, "doc_id", line);
    r.old_sentences = req_string_list(j, "old_sentences", line);
    r.new_sentences = req_string_list(j, "new_sentences", line);
    if (r.old_sentences.empty() || r.new_sentences.empty()) {
      throw DataError("sentence lists must be non-empty", line, "old_sentences/new_sentences");
    }
    if (auto d = opt_string(j, "domain_category", line)) {
      auto c = parse_domain(*d);
      if (!c) throw DataError("unknown domain_category '" + *d + "'", line, "domain_category");
      r.domain_category = *c;
    } else {
      r.domain_given = false;
    }
    for (const char* key : {"review_scores_old", "review_scores_new"}) {
      if (!j.contains(key) || j.at(key).is_null()) continue;
      auto scores = req_string_list(j, key, line);
      for (const auto& s : scores) {
        if (!kDecisions.count(s)) throw DataError("unknown review decision '" + s + "'", line, key);
      }
      (std::string_view(key) == "review_scores_old" ? r.review_scores_old : r.review_scores_new) =
          std::move(scores);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<EditSample> load_edits(const std::filesystem::path& path, const LabelSet* labels) {
  return parse_edits(read_file(path), labels);
}

std::vector<EditSample> load_singles(const std::filesystem::path& path, const LabelSet* labels) {
  return parse_singles(read_file(path), labels);
}

std::vector<DocumentRevision> load_revisions(const std::filesystem::path& path) {
  return parse_revisions(read_file(path));
}

DatasetSplit load_split(const std::filesystem::path& dir, Schema schema, const LabelSet* labels) {
  if (schema == Schema::revisions) throw DataError("revisions are not split into train/validation/test");
  DatasetSplit split;
  auto load = [&](const char* name, std::vector<EditSample>& into) {
    const auto path = dir / (std::string(name) + ".jsonl");
    if (!std::filesystem::exists(path)) return;
    try {
      into = schema == Schema::edits ? load_edits(path, labels) : load_singles(path, labels);
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + ": " + e.what(), 0, e.field());
    }
  };
  load("train", split.train);
  load("validation", split.validation);
  load("test", split.test);
  check_disjoint(split);
  return split;
}

std::string emit_edit(const EditSample& s) {
  json j;
  j["doc_id"] = s.doc_id;
  j["edit_id"] = s.edit_id;
  if (s.old_text) j["old"] = *s.old_text;
  if (s.new_text) j["new"] = *s.new_text;
  if (s.action && s.action_given) j["action"] = std::string(to_string(*s.action));
  if (s.intent) j["intent"] = *s.intent;
  if (s.old_index) j["old_index"] = *s.old_index;
  if (s.new_index) j["new_index"] = *s.new_index;
  return j.dump();
}

std::string emit_single(const EditSample& s) {
  json j;
  j["id"] = s.edit_id;
  j["text"] = s.new_text.value_or("");
  if (s.intent) j["label"] = *s.intent;
  return j.dump();
}

std::string emit_revision(const DocumentRevision& r) {
  json j;
  j["doc_id"] = r.doc_id;
  j["old_sentences"] = r.old_sentences;
  j["new_sentences"] = r.new_sentences;
  if (r.domain_given) j["domain_category"] = std::string(to_string(r.domain_category));
  if (r.review_scores_old) j["review_scores_old"] = *r.review_scores_old;
  if (r.review_scores_new) j["review_scores_new"] = *r.review_scores_new;
  return j.dump();
}

std::string emit_edits(std::span<const EditSample> samples) {
  std::string out;
  for (const auto& s : samples) out += emit_edit(s) + '\n';
  return out;
}

std::string emit_revisions(std::span<const DocumentRevision> docs) {
  std::string out;
  for (const auto& d : docs) out += emit_revision(d) + '\n';
  return out;
}

void save_split(const std::filesystem::path& dir, const DatasetSplit& split, Schema schema) {
  auto save = [&](const char* name, const std::vector<EditSample>& part) {
    std::string text;
    for (const auto& s : part) text += (schema == Schema::edits ? emit_edit(s) : emit_single(s)) + '\n';
    write_file(dir / (std::string(name) + ".jsonl"), text);
  };
  save("train", split.train);
  save("validation", split.validation);
  save("test", split.test);
}

std::vector<EditSample> balance_binary_pairs(std::span<const EditSample> samples,
                                             const LabelSet& labels, std::uint64_t seed) {
  if (labels.k() != 2) throw DataError("balance_binary_pairs requires a binary label set");
  std::vector<std::size_t> negatives;
  std::vector<bool> keep(samples.size(), false);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].intent) throw DataError("unlabeled sample '" + samples[i].edit_id + "'");
    const auto idx = labels.index_of(*samples[i].intent);
    if (!idx) throw DataError("unknown label '" + *samples[i].intent + "'");
    if (*idx == 0) {
      keep[i] = true;
      ++positives;
    } else {
      negatives.push_back(i);
    }
  }
  if (positives > negatives.size()) throw DataError("more positives than negatives");
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `positives` slots form the uniform subset.
  for (std::size_t i = 0; i < positives; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, negatives.size() - 1);
    std::swap(negatives[i], negatives[pick(rng)]);
    keep[negatives[i]] = true;
  }
  std::vector<EditSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) out.push_back(samples[i]);
  }
  return out;
}

std::vector<std::size_t> apportion(std::span<const std::size_t> counts, std::size_t n) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<std::size_t> quota(counts.size(), 0);
  if (total == 0 || n == 0) return quota;
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    // Exact integer arithmetic: quota = floor(n * c / total), remainder = n * c mod total.
    const auto prod = static_cast<unsigned __int128>(n) * counts[i];
    quota[i] = static_cast<std::size_t>(prod / total);
    remainders.emplace_back(static_cast<std::size_t>(prod % total), i);
    assigned += quota[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++quota[remainders[r].second];
  return quota;
}

std::vector<std::vector<EditSample>> stratified_partition(std::span<const EditSample> samples,
                                                          std::span<const std::size_t> sizes,
                                                          std::uint64_t seed) {
  const std::size_t requested = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (requested > samples.size()) {
    throw DataError("requested " + std::to_string(requested) + " samples from a pool of " +
                    std::to_string(samples.size()));
  }
  // Labels in order of first appearance; each label's pool is shuffled once, then consumed.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].intent) throw DataError("unlabeled sample '" + samples[i].edit_id + "'");
    auto& pool = pools[*samples[i].intent];
    if (pool.empty()) order.push_back(*samples[i].intent);
    pool.push_back(i);
  }
  std::mt19937_64 rng(seed);
  for (const auto& label : order) std::shuffle(pools[label].begin(), pools[label].end(), rng);

  std::vector<std::size_t> cursor(order.size(), 0);
  std::vector<std::vector<EditSample>> out;
  for (std::size_t n : sizes) {
    std::vector<std::size_t> remaining;
    for (std::size_t c = 0; c < order.size(); ++c) remaining.push_back(pools[order[c]].size() - cursor[c]);
    const auto quota = apportion(remaining, n);
    std::vector<std::size_t> picked;
    for (std::size_t c = 0; c < order.size(); ++c) {
      const auto& pool = pools[order[c]];
      picked.insert(picked.end(), pool.begin() + cursor[c], pool.begin() + cursor[c] + quota[c]);
      cursor[c] += quota[c];
    }
    std::sort(picked.begin(), picked.end());
    std::vector<EditSample> part;
    for (auto i : picked) part.push_back(samples[i]);
    out.push_back(std::move(part));
  }
  return out;
}

std::vector<EditSample> stratified_subsample(std::span<const EditSample> samples, std::size_t n,
                                             std::uint64_t seed) {
  const std::size_t sizes[] = {n};
  return std::move(stratified_partition(samples, sizes, seed).front());
}

}  // namespace eic
