#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "eic/corpus.hpp"
#include "eic/error.hpp"
#include "eic/util.hpp"

using namespace eic;

namespace {

EditSample labelled(std::string id, std::string label) {
  EditSample s;
  s.doc_id = "d";
  s.edit_id = std::move(id);
  s.new_text = "text";
  s.intent = std::move(label);
  s.action_given = false;
  s.action = Action::add;
  return s;
}

std::vector<EditSample> pool(const std::vector<std::pair<std::string, std::size_t>>& counts) {
  std::vector<EditSample> out;
  for (const auto& [label, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(labelled(label + std::to_string(i), label));
  }
  return out;
}

std::map<std::string, std::size_t> histogram(const std::vector<EditSample>& xs) {
  std::map<std::string, std::size_t> h;
  for (const auto& x : xs) ++h[*x.intent];
  return h;
}

}  // namespace

TEST_CASE("label sets reject duplicates, substrings and singletons") {
  CHECK_THROWS_AS(LabelSet({"a"}), DataError);
  CHECK_THROWS_AS(LabelSet({"a", "a"}), DataError);
  CHECK_THROWS_AS(LabelSet({"no", "not"}), DataError);
  CHECK_THROWS_AS(LabelSet({"x", ""}), DataError);
  const auto& l = LabelSet::edit_intents();
  CHECK(l.k() == 5);
  CHECK(l.names() == std::vector<std::string>{"Grammar", "Clarity", "Fact/Evidence", "Claim", "Other"});
  CHECK(l.index_of("Fact/Evidence") == 2u);
  CHECK_FALSE(l.contains("fact/evidence"));
}

TEST_CASE("edit lines infer actions from text presence") {
  const auto& labels = LabelSet::edit_intents();
  const auto xs = parse_edits(
      "{\"doc_id\":\"d1\",\"edit_id\":\"e1\",\"old\":\"a\",\"new\":\"b\",\"intent\":\"Clarity\"}\n"
      "{\"doc_id\":\"d1\",\"edit_id\":\"e2\",\"new\":\"b\",\"intent\":\"Claim\"}\n"
      "{\"doc_id\":\"d1\",\"edit_id\":\"e3\",\"old\":\"a\",\"intent\":\"Other\"}\n",
      &labels);
  REQUIRE(xs.size() == 3);
  CHECK(xs[0].action == Action::modify);
  CHECK(xs[1].action == Action::add);
  CHECK(xs[2].action == Action::remove);
  CHECK_FALSE(xs[0].action_given);
}

TEST_CASE("edit loader errors carry line and field") {
  const auto& labels = LabelSet::edit_intents();
  auto error_of = [&](const std::string& text) -> DataError {
    try {
      parse_edits(text, &labels);
    } catch (const DataError& e) {
      return e;
    }
    FAIL("expected a DataError");
    return DataError("");
  };
  const auto good = std::string("{\"doc_id\":\"d\",\"edit_id\":\"e1\",\"new\":\"b\",\"intent\":\"Claim\"}\n");
  auto e = error_of(good + "{\"doc_id\":\"d\",\"edit_id\":\"e2\",\"new\":\"b\",\"intent\":\"Typo\"}\n");
  CHECK(e.line() == 2);
  CHECK(e.field() == "intent");
  e = error_of(good + good.substr(0, 10) + "\n");
  CHECK(e.line() == 2);
  e = error_of("{\"doc_id\":\"d\",\"edit_id\":\"e\",\"old\":\"a\",\"action\":\"Add\",\"intent\":\"Claim\"}\n");
  CHECK(e.line() == 1);
  e = error_of("{\"doc_id\":\"d\",\"edit_id\":\"e\",\"intent\":\"Claim\"}\n");
  CHECK(e.line() == 1);
  CHECK(error_of("{\"doc_id\":\"d\",\"edit_id\":\"e\",\"new\":\"x\",\"action\":\"Move\"}\n").field() == "action");
}

TEST_CASE("emission round-trips edits, singles and revisions") {
  const auto& labels = LabelSet::edit_intents();
  const std::string edits =
      "{\"action\":\"Modify\",\"doc_id\":\"d1\",\"edit_id\":\"e1\",\"intent\":\"Clarity\",\"new\":\"b\",\"old\":\"a\"}\n"
      "{\"doc_id\":\"d1\",\"edit_id\":\"e2\",\"intent\":\"Claim\",\"new\":\"caf\xc3\xa9 \\\"q\\\"\"}\n";
  const auto parsed = parse_edits(edits, &labels);
  CHECK(emit_edits(parsed) == edits);
  CHECK(parse_edits(emit_edits(parsed), &labels) == parsed);

  const LabelSet yn({"yes", "no"});
  const std::string singles = "{\"id\":\"s1\",\"label\":\"yes\",\"text\":\"t\"}\n";
  const auto s = parse_singles(singles, &yn);
  REQUIRE(s.size() == 1);
  CHECK(emit_single(s[0]) + "\n" == singles);

  const std::string revs =
      "{\"doc_id\":\"r1\",\"domain_category\":\"nlp\",\"new_sentences\":[\"a\",\"c\"],\"old_sentences\":[\"a\",\"b\"],"
      "\"review_scores_new\":[\"approve\"],\"review_scores_old\":[\"reject\"]}\n";
  const auto r = parse_revisions(revs);
  REQUIRE(r.size() == 1);
  CHECK(r[0].domain_category == DomainCategory::nlp);
  CHECK(emit_revisions(r) == revs);
  CHECK_THROWS_AS(parse_revisions("{\"doc_id\":\"r\",\"old_sentences\":[],\"new_sentences\":[\"a\"]}\n"), DataError);
  CHECK_THROWS_AS(parse_revisions("{\"doc_id\":\"r\",\"old_sentences\":[\"a\"],\"new_sentences\":[\"a\"],"
                                  "\"review_scores_old\":[\"maybe\"]}\n"),
                  DataError);
}

TEST_CASE("splits save, load and must be disjoint") {
  const auto dir = std::filesystem::temp_directory_path() / "eic-split-test";
  std::filesystem::remove_all(dir);
  DatasetSplit d;
  d.train = {labelled("a", "Claim"), labelled("b", "Other")};
  d.validation = {labelled("c", "Claim")};
  d.test = {labelled("d", "Grammar")};
  save_split(dir, d, Schema::edits);
  const auto back = load_split(dir, Schema::edits, &LabelSet::edit_intents());
  CHECK(back.train == d.train);
  CHECK(back.test == d.test);
  d.test.push_back(labelled("a", "Claim"));
  CHECK_THROWS_AS(check_disjoint(d), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("binary balancing keeps every positive and as many negatives") {
  const LabelSet yn({"yes", "no"});
  const auto xs = pool({{"yes", 10}, {"no", 30}});
  const auto out = balance_binary_pairs(xs, yn, 7);
  CHECK(out.size() == 20);
  CHECK(histogram(out)["yes"] == 10);
  CHECK(out == balance_binary_pairs(xs, yn, 7));
  CHECK(balance_binary_pairs(pool({{"no", 5}}), yn, 7).empty());
  CHECK_THROWS_AS(balance_binary_pairs(xs, LabelSet::edit_intents(), 7), DataError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = balance_binary_pairs(xs, yn, seed);
    const auto h = histogram(b);
    CHECK(h.at("yes") == h.at("no"));
  }
}

TEST_CASE("stratified subsampling follows largest-remainder quotas") {
  CHECK(histogram(stratified_subsample(pool({{"a", 50}, {"b", 50}}), 10, 1)) ==
        std::map<std::string, std::size_t>{{"a", 5}, {"b", 5}});
  CHECK(histogram(stratified_subsample(pool({{"a", 90}, {"b", 10}}), 10, 1)) ==
        std::map<std::string, std::size_t>{{"a", 9}, {"b", 1}});
  CHECK(histogram(stratified_subsample(pool({{"a", 60}, {"b", 30}, {"c", 10}}), 20, 1)) ==
        std::map<std::string, std::size_t>{{"a", 12}, {"b", 6}, {"c", 2}});
  CHECK_THROWS_AS(stratified_subsample(pool({{"a", 3}}), 4, 1), DataError);
}

TEST_CASE("apportionment matches a brute-force largest-remainder oracle") {
  SplitMix64 rng{11};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng.next() % 5;
    std::vector<std::size_t> counts(k);
    std::size_t total = 0;
    for (auto& c : counts) total += (c = rng.next() % 40);
    if (total == 0) continue;
    const std::size_t n = rng.next() % (total + 1);
    const auto q = apportion(counts, n);
    // Oracle in rational arithmetic: floor parts, then +1 for the largest remainders.
    std::vector<std::size_t> expect(k);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
      expect[i] = n * counts[i] / total;
      assigned += expect[i];
      rem.emplace_back(-static_cast<double>(n * counts[i] % total), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first < b.first; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++expect[rem[r].second];
    CHECK(q == expect);
    for (std::size_t i = 0; i < k; ++i) {
      const double exact = static_cast<double>(n) * counts[i] / total;
      CHECK(std::abs(static_cast<double>(q[i]) - exact) < 1.0);
    }
  }
}

TEST_CASE("stratified partitions are disjoint and seed-deterministic") {
  const auto xs = pool({{"a", 40}, {"b", 25}, {"c", 15}});
  const std::size_t sizes[] = {20, 30};
  const auto parts = stratified_partition(xs, sizes, 3);
  REQUIRE(parts.size() == 2);
  std::set<std::string> ids;
  for (const auto& p : parts) {
    for (const auto& s : p) CHECK(ids.insert(s.edit_id).second);
  }
  CHECK(parts == stratified_partition(xs, sizes, 3));
  CHECK(parts[0].size() == 20);
  CHECK(parts[1].size() == 30);
}

TEST_CASE("label occurrences respect word boundaries") {
  CHECK(label_occurrences("not sure, no", "no") == std::vector<std::size_t>{10});
  CHECK(label_occurrences("Fact/Evidence.", "Fact/Evidence") == std::vector<std::size_t>{0});
  CHECK(label_occurrences("Claims", "Claim").empty());
}

TEST_CASE("every registered task mentions each label exactly once") {
  std::set<std::string> ids;
  for (const auto& t : task_registry()) {
    ids.insert(t.task_id);
    CHECK_NOTHROW(validate(t));
    for (const auto& l : t.label_set.names()) CHECK(label_occurrences(t.instruction_text, l).size() == 1);
  }
  CHECK(ids == std::set<std::string>{"eic", "sdq", "tse", "tuc", "ec", "tsec", "ra"});
  CHECK(find_task("eic").label_set == LabelSet::edit_intents());
  CHECK_THROWS_AS(find_task("nope"), DataError);
}
