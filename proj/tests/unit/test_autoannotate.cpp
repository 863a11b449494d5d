#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "eic/autoannotate.hpp"
#include "eic/synthetic.hpp"
#include "eic/util.hpp"

using namespace eic;

namespace {

/// Labels by action; throws on edits whose new text contains "POISON".
class RuleLabeler final : public IntentLabeler {
 public:
  std::vector<std::string> label(std::span<const EditSample> edits) override {
    ++calls;
    std::vector<std::string> out;
    for (const auto& e : edits) {
      if (e.new_text && e.new_text->find("POISON") != std::string::npos) throw ModelError("poisoned edit");
      out.push_back(e.action == Action::add ? "Claim" : e.action == Action::remove ? "Other" : "Clarity");
    }
    return out;
  }
  std::string id() const override { return "rule-labeler"; }
  int calls = 0;
};

class ThrowingScorer final : public PairScorer {
 public:
  double margin(std::string_view o, std::string_view) override {
    if (o.find("BAD") != std::string_view::npos) throw DataError("unscorable sentence");
    return -1.0;
  }
};

std::vector<DocumentRevision> docs(std::size_t n, std::uint64_t seed) {
  RevisionSynthOptions o;
  o.max_sentences = 40;
  std::vector<DocumentRevision> out;
  for (const auto& r : synth_corpus(n, seed, o)) out.push_back(r.doc);
  return out;
}

/// Copies model columns into the blank human columns.
std::string fill_worksheet(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  std::getline(in, line);
  out += line + "\n";
  while (std::getline(in, line)) {
    REQUIRE(line.ends_with(",,"));
    const auto body = line.substr(0, line.size() - 2);
    const auto c1 = body.find(',');
    const auto c2 = body.find(',', c1 + 1);
    const auto c3 = body.find(',', c2 + 1);
    const auto action = body.substr(c2 + 1, c3 - c2 - 1);
    const auto intent = body.substr(body.rfind(',') + 1);
    out += body + "," + action + "," + intent + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("word counting ignores punctuation") {
  CHECK(count_words("The model, trained in 2 GPUs.") == 6);
  CHECK(count_words("-- ; ...") == 0);
  CHECK(count_words("") == 0);
}

TEST_CASE("every derived edit gets an action and an intent") {
  const auto revs = docs(8, 1);
  RuleLabeler labeler;
  const auto out = annotate(revs, {}, labeler);
  CHECK(out.failures.empty());
  REQUIRE(out.documents.size() == revs.size());
  for (std::size_t i = 0; i < revs.size(); ++i) {
    const auto& d = out.documents[i];
    CHECK(d.doc_id == revs[i].doc_id);
    CHECK(d.counts.edits == d.edits.size());
    CHECK(d.counts.sentences == revs[i].new_sentences.size());
    CHECK(d.provenance.intent_model == "rule-labeler");
    CHECK(d.provenance.alignment_model.empty());
    for (const auto& e : d.edits) {
      CHECK(e.action);
      CHECK(e.intent);
    }
  }
}

TEST_CASE("a failing document does not stop the others") {
  auto revs = docs(6, 2);
  revs[1].new_sentences.push_back("This sentence is POISON for the labeler.");
  revs[4].old_sentences.push_back("A BAD sentence with no partner.");
  revs[4].new_sentences.push_back("Entirely unrelated closing words.");
  RuleLabeler labeler;
  AnnotateConfig cfg;
  cfg.batch_size = 1;
  ThrowingScorer scorer;
  const auto out = annotate(revs, cfg, labeler, &scorer, "throwing");
  REQUIRE(out.failures.size() == 2);
  std::set<std::string> failed;
  for (const auto& f : out.failures) failed.insert(f.doc_id);
  CHECK(failed == std::set<std::string>{revs[1].doc_id, revs[4].doc_id});
  CHECK(out.documents.size() == 4);
  for (const auto& d : out.documents) {
    CHECK_FALSE(failed.count(d.doc_id));
    CHECK(d.provenance.alignment_model == "throwing");
  }
}

TEST_CASE("parallel pre-alignment gives the same corpus") {
  const auto revs = docs(30, 3);
  RuleLabeler a, b;
  AnnotateConfig one, four;
  four.jobs = 4;
  const auto x = annotate(revs, one, a);
  const auto y = annotate(revs, four, b);
  REQUIRE(x.documents.size() == y.documents.size());
  for (std::size_t i = 0; i < x.documents.size(); ++i) CHECK(emit_annotated(x.documents[i]) == emit_annotated(y.documents[i]));
}

TEST_CASE("batches pool edits across documents") {
  const auto revs = docs(10, 4);
  RuleLabeler labeler;
  AnnotateConfig cfg;
  cfg.batch_size = 7;
  const auto out = annotate(revs, cfg, labeler);
  std::size_t edits = 0;
  for (const auto& d : out.documents) edits += d.edits.size();
  CHECK(labeler.calls == static_cast<int>((edits + 6) / 7));
  cfg.batch_size = 0;
  CHECK_THROWS_AS(annotate(revs, cfg, labeler), ConfigError);
}

TEST_CASE("annotated documents round-trip with provenance") {
  const auto revs = docs(5, 5);
  RuleLabeler labeler;
  const auto out = annotate(revs, {}, labeler);
  std::string all;
  for (const auto& d : out.documents) {
    const auto line = emit_annotated(d);
    CHECK(parse_annotated_line(line) == d);
    all += line + "\n";
  }
  CHECK(parse_annotated(all) == out.documents);
  CHECK_THROWS_AS(parse_annotated("{\"doc_id\":\"x\"}\n"), DataError);

  const auto dir = std::filesystem::temp_directory_path() / "eic-annotate-test";
  std::filesystem::remove_all(dir);
  write_corpus(dir, out, {{"seed", 5}});
  CHECK(load_annotated(dir / "annotated.jsonl") == out.documents);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["seed"] == 5);
  for (const auto* f : {"edits.jsonl", "failures.jsonl"}) CHECK(std::filesystem::exists(dir / f));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus statistics average per document") {
  AnnotatedRevision a, b;
  a.doc_id = "a";
  b.doc_id = "b";
  a.domain_category = b.domain_category = DomainCategory::nlp;
  a.counts = {100, 10, 10, 2};
  b.counts = {200, 30, 28, 4};
  a.edits.resize(2);
  b.edits.resize(4);
  const std::vector<AnnotatedRevision> xs = {a, b};
  const auto rows = corpus_stats(xs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].category == "nlp");
  CHECK(rows[1].category == "overall");
  CHECK(rows[1].documents == 2);
  CHECK(rows[1].edits == 6);
  CHECK(rows[1].avg_edits == doctest::Approx(3.0));
  CHECK(rows[1].avg_words == doctest::Approx(150.0));
  CHECK(rows[1].avg_sentences == doctest::Approx(20.0));
  CHECK_FALSE(render_stats(rows).empty());
}

TEST_CASE("review worksheets sample whole documents and score against humans") {
  const auto revs = docs(12, 6);
  RuleLabeler labeler;
  const auto out = annotate(revs, {}, labeler);
  const auto sheet = sample_for_review(out.documents, 4, 9);
  CHECK(sheet == sample_for_review(out.documents, 4, 9));
  CHECK(sheet.starts_with("doc_id,edit_id,action,old_text,new_text,model_intent,human_action,human_intent\n"));
  std::set<std::string> sampled;
  std::istringstream in(sheet);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    sampled.insert(line.substr(0, line.find(',')));
    ++rows;
  }
  CHECK(sampled.size() == 4);
  CHECK_THROWS_AS(sample_for_review(out.documents, 13, 9), DataError);

  CHECK_THROWS_AS(score_worksheet(sheet), DataError);
  const auto scores = score_worksheet(fill_worksheet(sheet));
  CHECK(scores.rows == rows);
  CHECK(scores.action_accuracy == doctest::Approx(1.0));
  CHECK(scores.intent.accuracy == doctest::Approx(1.0));
  CHECK(scores.intent.macro_f1 == doctest::Approx(1.0));
  CHECK_FALSE(render_review(scores, LabelSet::edit_intents()).empty());
}
