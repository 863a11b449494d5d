// Writes the synthetic sample corpus under data/sample.
#include <iostream>

#include <CLI11.hpp>

#include "eic/synthetic.hpp"
#include "eic/util.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic sample data", "make_sample_data"};
  std::string dir = "data/sample";
  std::uint64_t seed = 1;
  std::size_t docs = 40;
  app.add_option("--out", dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--docs", docs, "revision documents");
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  eic::save_split(fs::path(dir) / "eic", eic::synth_intent_dataset(500, 100, 100, seed), eic::Schema::edits);
  eic::RevisionSynthOptions opts;
  opts.min_sentences = 20;
  opts.max_sentences = 60;
  std::vector<eic::DocumentRevision> revs;
  std::vector<eic::EditSample> gold;
  for (auto& r : eic::synth_corpus(docs, seed, opts)) {
    gold.insert(gold.end(), r.script.begin(), r.script.end());
    revs.push_back(std::move(r.doc));
  }
  eic::write_file(fs::path(dir) / "revisions.jsonl", eic::emit_revisions(revs));
  eic::write_file(fs::path(dir) / "revisions_gold_edits.jsonl", eic::emit_edits(gold));
  std::cout << "wrote " << dir << "\n";
}
