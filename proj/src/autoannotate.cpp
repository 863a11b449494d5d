#include "eic/autoannotate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "eic/util.hpp"

namespace eic {

ClassifierLabeler::ClassifierLabeler(const Classifier& classifier, Backend& backend, std::string id)
    : classifier_(classifier), backend_(backend), id_(std::move(id)) {
  if (classifier_.config().approach != Approach::seqc) {
    throw ModelError("auto-annotation needs a SeqC checkpoint, got " +
                     std::string(to_string(classifier_.config().approach)));
  }
}

std::vector<std::string> ClassifierLabeler::label(std::span<const EditSample> edits) {
  std::vector<std::string> out;
  out.reserve(edits.size());
  for (const auto& e : edits) out.push_back(*classifier_.predict(backend_, e).label);
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  for (const auto& t : tokenize(text)) {
    n += std::any_of(t.text.begin(), t.text.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; });
  }
  return n;
}

AnnotateOutput annotate(std::span<const DocumentRevision> revisions, const AnnotateConfig& cfg,
                        IntentLabeler& labeler, PairScorer* alignment_scorer, const std::string& alignment_model) {
  if (cfg.batch_size == 0) throw ConfigError({"annotate batch_size must be >= 1"});
  AnnotateOutput out;
  struct Pending {
    std::size_t doc;
    std::size_t edit;
  };
  std::vector<Pending> queue;
  std::vector<bool> failed;

  auto build = [&](const DocumentRevision& rev) {
    const auto r = align(rev.old_sentences, rev.new_sentences, alignment_scorer, cfg.alignment);
    AnnotatedRevision doc;
    doc.doc_id = rev.doc_id;
    doc.domain_category = rev.domain_category;
    doc.edits = derive_edits(r, rev);
    doc.review_scores_old = rev.review_scores_old;
    doc.review_scores_new = rev.review_scores_new;
    doc.counts.sentences = rev.new_sentences.size();
    doc.counts.old_sentences = rev.old_sentences.size();
    doc.counts.edits = doc.edits.size();
    for (const auto& s : rev.new_sentences) doc.counts.words += count_words(s);
    doc.provenance.intent_model = labeler.id();
    doc.provenance.alignment_model = alignment_scorer ? alignment_model : "";
    return doc;
  };
  std::vector<std::optional<AnnotatedRevision>> built(revisions.size());
  std::vector<std::optional<DocumentFailure>> errors(revisions.size());
  auto work = [&](std::size_t i) {
    try {
      built[i] = build(revisions[i]);
    } catch (const Error& e) {
      errors[i] = DocumentFailure{revisions[i].doc_id, e.kind(), e.what()};
    } catch (const std::exception& e) {
      errors[i] = DocumentFailure{revisions[i].doc_id, ErrorKind::internal, e.what()};
    }
  };
  // The classifier scorer shares one backend stream, so only pre-alignment runs in parallel.
  const std::size_t jobs = alignment_scorer ? 1 : std::max<std::size_t>(1, cfg.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < revisions.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < revisions.size();) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < revisions.size(); ++i) {
    if (errors[i]) {
      out.failures.push_back(std::move(*errors[i]));
      continue;
    }
    for (std::size_t e = 0; e < built[i]->edits.size(); ++e) queue.push_back({out.documents.size(), e});
    out.documents.push_back(std::move(*built[i]));
    failed.push_back(false);
  }

  // Batches span documents; a failing batch marks each document it touched as failed.
  for (std::size_t start = 0; start < queue.size(); start += cfg.batch_size) {
    const auto end = std::min(queue.size(), start + cfg.batch_size);
    std::vector<EditSample> batch;
    for (auto k = start; k < end; ++k) batch.push_back(out.documents[queue[k].doc].edits[queue[k].edit]);
    try {
      const auto labels = labeler.label(batch);
      if (labels.size() != batch.size()) throw ModelError("labeler returned the wrong number of labels");
      for (auto k = start; k < end; ++k) out.documents[queue[k].doc].edits[queue[k].edit].intent = labels[k - start];
    } catch (const Error& e) {
      for (auto k = start; k < end; ++k) {
        const auto d = queue[k].doc;
        if (failed[d]) continue;
        failed[d] = true;
        out.failures.push_back({out.documents[d].doc_id, e.kind(), e.what()});
      }
    }
  }
  std::vector<AnnotatedRevision> kept;
  for (std::size_t d = 0; d < out.documents.size(); ++d) {
    if (!failed[d]) kept.push_back(std::move(out.documents[d]));
  }
  out.documents = std::move(kept);
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

nlohmann::ordered_json edit_json(const EditSample& e) {
  nlohmann::ordered_json j;
  j["edit_id"] = e.edit_id;
  j["action"] = to_string(*e.action);
  j["intent"] = e.intent ? nlohmann::ordered_json(*e.intent) : nlohmann::ordered_json();
  j["old_text"] = e.old_text ? nlohmann::ordered_json(*e.old_text) : nlohmann::ordered_json();
  j["new_text"] = e.new_text ? nlohmann::ordered_json(*e.new_text) : nlohmann::ordered_json();
  j["old_index"] = e.old_index ? nlohmann::ordered_json(*e.old_index) : nlohmann::ordered_json();
  j["new_index"] = e.new_index ? nlohmann::ordered_json(*e.new_index) : nlohmann::ordered_json();
  return j;
}

template <typename T>
std::optional<T> opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

std::string emit_annotated(const AnnotatedRevision& doc) {
  nlohmann::ordered_json j;
  j["doc_id"] = doc.doc_id;
  j["domain_category"] = to_string(doc.domain_category);
  j["counts"] = {{"words", doc.counts.words},
                 {"sentences", doc.counts.sentences},
                 {"old_sentences", doc.counts.old_sentences},
                 {"edits", doc.counts.edits}};
  j["provenance"] = {{"intent_model", doc.provenance.intent_model},
                     {"alignment_model", doc.provenance.alignment_model},
                     {"pipeline_version", doc.provenance.pipeline_version}};
  if (doc.review_scores_old) j["review_scores_old"] = *doc.review_scores_old;
  if (doc.review_scores_new) j["review_scores_new"] = *doc.review_scores_new;
  auto& edits = j["edits"] = nlohmann::ordered_json::array();
  for (const auto& e : doc.edits) edits.push_back(edit_json(e));
  return j.dump();
}

AnnotatedRevision parse_annotated_line(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw DataError("annotated record is not valid JSON", line_no);
  }
  try {
    AnnotatedRevision d;
    d.doc_id = j.at("doc_id").get<std::string>();
    const auto dom = parse_domain(j.at("domain_category").get<std::string>());
    if (!dom) throw DataError("unknown domain_category", line_no, "domain_category");
    d.domain_category = *dom;
    const auto& c = j.at("counts");
    d.counts = {c.at("words").get<std::size_t>(), c.at("sentences").get<std::size_t>(),
                c.at("old_sentences").get<std::size_t>(), c.at("edits").get<std::size_t>()};
    const auto& p = j.at("provenance");
    d.provenance = {p.at("intent_model").get<std::string>(), p.at("alignment_model").get<std::string>(),
                    p.at("pipeline_version").get<std::string>()};
    d.review_scores_old = opt<std::vector<std::string>>(j, "review_scores_old");
    d.review_scores_new = opt<std::vector<std::string>>(j, "review_scores_new");
    for (const auto& e : j.at("edits")) {
      EditSample s;
      s.doc_id = d.doc_id;
      s.edit_id = e.at("edit_id").get<std::string>();
      const auto action = parse_action(e.at("action").get<std::string>());
      if (!action) throw DataError("unknown action", line_no, "action");
      s.action = action;
      s.intent = opt<std::string>(e, "intent");
      s.old_text = opt<std::string>(e, "old_text");
      s.new_text = opt<std::string>(e, "new_text");
      s.old_index = opt<int>(e, "old_index");
      s.new_index = opt<int>(e, "new_index");
      d.edits.push_back(std::move(s));
    }
    if (d.counts.edits != d.edits.size()) throw DataError("edit count does not match edits", line_no, "counts");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed annotated record: ") + e.what(), line_no);
  }
}

std::vector<AnnotatedRevision> parse_annotated(std::string_view jsonl) {
  std::vector<AnnotatedRevision> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    ++line_no;
    const auto line = jsonl.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(parse_annotated_line(line, line_no));
    pos = nl + 1;
  }
  return out;
}

std::vector<AnnotatedRevision> load_annotated(const std::filesystem::path& path) {
  return parse_annotated(read_file(path));
}

void write_corpus(const std::filesystem::path& dir, const AnnotateOutput& out, const nlohmann::json& manifest_extra) {
  std::string annotated, edits, failures;
  std::size_t n_edits = 0;
  for (const auto& d : out.documents) {
    annotated += emit_annotated(d) + "\n";
    edits += emit_edits(d.edits);
    n_edits += d.edits.size();
  }
  for (const auto& f : out.failures) {
    nlohmann::ordered_json j;
    j["doc_id"] = f.doc_id;
    j["error_class"] = static_cast<int>(f.kind);
    j["message"] = f.message;
    failures += j.dump() + "\n";
  }
  write_file(dir / "annotated.jsonl", annotated);
  write_file(dir / "edits.jsonl", edits);
  write_file(dir / "failures.jsonl", failures);

  nlohmann::ordered_json m;
  m["pipeline_version"] = kPipelineVersion;
  if (const auto t = manifest_timestamp()) m["timestamp"] = *t;
  m["documents"] = out.documents.size();
  m["edits"] = n_edits;
  m["failures"] = out.failures.size();
  for (const auto& [k, v] : manifest_extra.items()) m[k] = v;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Statistics and review

std::vector<CategoryStats> corpus_stats(std::span<const AnnotatedRevision> docs) {
  if (docs.empty()) throw DataError("corpus statistics need at least one document");
  auto summarize = [](std::string name, const std::vector<const AnnotatedRevision*>& group) {
    CategoryStats s;
    s.category = std::move(name);
    s.documents = group.size();
    double words = 0, sentences = 0;
    for (const auto* d : group) {
      words += double(d->counts.words);
      sentences += double(d->counts.sentences);
      s.edits += d->edits.size();
    }
    const double n = double(group.size());
    s.avg_words = words / n;
    s.avg_sentences = sentences / n;
    s.avg_edits = double(s.edits) / n;
    return s;
  };
  std::vector<CategoryStats> rows;
  for (auto cat : kAllDomains) {
    std::vector<const AnnotatedRevision*> group;
    for (const auto& d : docs) {
      if (d.domain_category == cat) group.push_back(&d);
    }
    if (!group.empty()) rows.push_back(summarize(std::string(to_string(cat)), group));
  }
  std::vector<const AnnotatedRevision*> all;
  for (const auto& d : docs) all.push_back(&d);
  rows.push_back(summarize("overall", all));
  return rows;
}

std::string render_stats(std::span<const CategoryStats> rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s %10s %10s %10s\n", "category", "docs", "edits", "avg words",
                "avg sents", "avg edits");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %8zu %8zu %10.1f %10.1f %10.1f\n", r.category.c_str(), r.documents,
                  r.edits, r.avg_words, r.avg_sentences, r.avg_edits);
    out += buf;
  }
  return out;
}

std::string sample_for_review(std::span<const AnnotatedRevision> docs, std::size_t n_docs, std::uint64_t seed) {
  if (n_docs > docs.size()) {
    throw DataError("cannot sample " + std::to_string(n_docs) + " documents from " + std::to_string(docs.size()));
  }
  std::vector<std::size_t> idx(docs.size());
  std::iota(idx.begin(), idx.end(), 0);
  SplitMix64 rng{derive_seed(seed, "review")};
  for (std::size_t i = 0; i < n_docs; ++i) std::swap(idx[i], idx[i + rng.next() % (idx.size() - i)]);
  idx.resize(n_docs);
  std::sort(idx.begin(), idx.end());

  std::string csv = csv_row(kWorksheetHeader);
  for (auto i : idx) {
    for (const auto& e : docs[i].edits) {
      csv += csv_row({e.doc_id, e.edit_id, std::string(to_string(*e.action)), e.old_text.value_or(""),
                      e.new_text.value_or(""), e.intent.value_or(""), "", ""});
    }
  }
  return csv;
}

ReviewScores score_worksheet(std::string_view csv) {
  const auto rows = csv_parse(csv);
  if (rows.empty() || rows.front() != kWorksheetHeader) throw DataError("worksheet header does not match", 1);
  std::vector<Prediction> preds;
  std::vector<std::string> golds;
  std::size_t action_hits = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != kWorksheetHeader.size()) throw DataError("worksheet row has the wrong field count", r + 1);
    if (row[6].empty() || row[7].empty()) continue;
    Prediction p;
    p.label = row[5];
    p.answer_included = !row[5].empty();
    preds.push_back(p);
    golds.push_back(row[7]);
    action_hits += row[2] == row[6];
  }
  if (preds.empty()) throw DataError("worksheet has no scored rows");
  ReviewScores s;
  s.rows = preds.size();
  s.action_accuracy = double(action_hits) / double(preds.size());
  s.intent.n = preds.size();
  s.intent.accuracy = accuracy(preds, golds);
  s.intent.macro_f1 = macro_f1(preds, golds);
  s.intent.air = air(preds);
  s.intent.per_class = per_class(preds, golds, LabelSet::edit_intents());
  return s;
}

std::string render_review(const ReviewScores& s, const LabelSet& labels) {
  std::ostringstream out;
  char buf[64];
  out << "Acc.\tM. F1";
  for (const auto& l : labels.names()) out << '\t' << l << " P\t" << l << " R\t" << l << " F1";
  out << '\n';
  std::snprintf(buf, sizeof buf, "%.2f\t%.2f", 100 * s.intent.accuracy, 100 * s.intent.macro_f1);
  out << buf;
  for (const auto& l : labels.names()) {
    auto it = std::find_if(s.intent.per_class.begin(), s.intent.per_class.end(),
                           [&](const ClassScore& c) { return c.label == l; });
    if (it == s.intent.per_class.end()) {
      out << "\t-\t-\t-";
      continue;
    }
    std::snprintf(buf, sizeof buf, "\t%.2f\t%.2f\t%.2f", 100 * it->precision, 100 * it->recall, 100 * it->f1);
    out << buf;
  }
  out << '\n';
  return out.str();
}

}  // namespace eic
