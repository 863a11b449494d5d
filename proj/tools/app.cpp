#include "app.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "eic/alignment.hpp"
#include "eic/analysis.hpp"
#include "eic/autoannotate.hpp"
#include "eic/error.hpp"
#include "eic/evaluation.hpp"
#include "eic/remote_client.hpp"
#include "eic/stub_backend.hpp"
#include "eic/training.hpp"
#include "eic/util.hpp"

namespace eic::cli {

namespace fs = std::filesystem;

namespace {

enum Command : unsigned {
  kTrain = 1,
  kEvaluate = 2,
  kAlign = 4,
  kAnnotate = 8,
  kAnalyze = 16,
  kReport = 32,
  kAll = 63,
};

struct Key {
  std::string_view name;
  std::string_view fallback;
  std::string_view help;
  unsigned commands;
  bool flag = false;     // boolean switch on the command line
  bool hashed = true;    // part of the run identity
};

// clang-format off
const std::vector<Key> kKeys = {
  {"seed", "0", "root seed for every random choice", kAll},
  {"out_dir", "runs", "parent directory of run directories", kAll, false, false},
  {"task", "eic", "task id: eic, sdq, tse, tuc, ec, tsec, ra", kTrain | kEvaluate},
  {"approach", "seqc", "gen, seqc, snet or xnet", kTrain | kEvaluate},
  {"transform", "auto", "diff, diffABS, n-diffABS, n-o, n-diffABS-o; none for seqc/gen; auto picks", kTrain},
  {"format", "structured", "natural, structured, inst+natural or inst+structured", kTrain | kEvaluate},
  {"selection", "macro_f1", "checkpoint selection metric: macro_f1 or accuracy", kTrain},
  {"data", "", "directory with train/validation/test .jsonl files", kTrain | kEvaluate},
  {"backend", "tiny", "tiny (trainable), stub or remote (generation only)", kTrain | kEvaluate},
  {"backend.dim", "32", "hidden size of the tiny encoder", kTrain},
  {"backend.buckets", "2048", "token hash buckets of the tiny encoder", kTrain},
  {"backend.model", "", "model name sent to the remote endpoint", kEvaluate},
  {"finetune.preset", "false", "take adapter and epoch settings from the task preset", kTrain, true},
  {"finetune.mode", "full", "full or adapter", kTrain},
  {"finetune.rank", "0", "adapter rank", kTrain},
  {"finetune.alpha", "0", "adapter alpha", kTrain},
  {"finetune.dropout", "0", "adapter dropout", kTrain},
  {"finetune.epochs", "10", "training epochs", kTrain},
  {"optim.lr", "0", "learning rate; 0 picks the mode default", kTrain},
  {"optim.batch_size", "16", "samples per optimizer step", kTrain},
  {"optim.warmup", "0.03", "warmup share of all steps", kTrain},
  {"resume", "0", "continue the run from this epoch's checkpoint", kTrain, false, false},
  {"checkpoint", "", "checkpoint file or training run directory", kEvaluate | kAnnotate},
  {"split", "test", "split to evaluate: train, validation or test", kEvaluate},
  {"input", "", "revisions .jsonl file", kAlign | kAnnotate},
  {"alignment.checkpoint", "", "revision-alignment classifier for stage 2 (optional)", kAlign | kAnnotate},
  {"alignment.threshold", "0.5", "pre-alignment Jaccard threshold", kAlign | kAnnotate},
  {"alignment.window", "10", "pre-alignment window in sentences", kAlign | kAnnotate},
  {"annotate.batch_size", "64", "edits per labelling batch", kAnnotate},
  {"jobs", "1", "threads for document-parallel stages", kAnnotate, false, false},
  {"corpus", "", "annotated.jsonl or an annotate run directory", kAnalyze | kReport},
  {"scores", "", "review decisions .jsonl: {doc_id, review_scores_old, review_scores_new}", kAnalyze},
  {"analysis.bins", "10", "position histogram bins", kAnalyze},
  {"analysis.full_grid", "false", "regress on all 15 action-intent combinations", kAnalyze, true},
  {"analysis.kl_epsilon", "1e-9", "KL smoothing constant", kAnalyze},
  {"review.sample", "0", "documents to sample into a review worksheet", kReport},
  {"worksheet", "", "filled review worksheet to score", kReport},
  {"metrics", "", "comma-separated evaluate metrics.json files to tabulate", kReport},
};
// clang-format on

const std::vector<std::pair<std::string_view, unsigned>> kCommands = {
    {"train", kTrain},     {"evaluate", kEvaluate}, {"align", kAlign},
    {"annotate", kAnnotate}, {"analyze", kAnalyze}, {"report", kReport},
};

const Key* find_key(std::string_view name) {
  for (const auto& k : kKeys) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

unsigned command_bit(std::string_view command) {
  for (const auto& [name, bit] : kCommands) {
    if (name == command) return bit;
  }
  throw Error(ErrorKind::internal, "unknown command " + std::string(command));
}

std::string flag_name(std::string_view key) {
  std::string f = "--";
  for (char c : key) f += (c == '.' || c == '_') ? '-' : c;
  return f;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Typed access that collects every violation before failing.
class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  const std::string& text(const std::string& key) const { return s_.at(key); }

  long integer(const std::string& key, long lo) {
    const auto& t = text(key);
    long v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) return fail(key, "an integer", lo);
    if (v < lo) return fail(key, "an integer >= " + std::to_string(lo), lo);
    return v;
  }

  double real(const std::string& key) {
    const auto& t = text(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used == t.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    return fail(key, "a finite number", 0.0);
  }

  bool boolean(const std::string& key) {
    const auto& t = text(key);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    return fail(key, "true or false", false);
  }

  template <typename T, typename Parse>
  T choice(const std::string& key, Parse parse, T fallback) {
    if (auto v = parse(text(key))) return *v;
    return fail(key, "a known value", fallback);
  }

  void violation(std::string v) { violations_.push_back(std::move(v)); }
  void absorb(const ConfigError& e) {
    for (const auto& v : e.violations()) violations_.push_back(v);
  }
  void require(const std::string& key) {
    if (text(key).empty()) violation(key + " is required");
  }
  void finish() {
    if (!violations_.empty()) throw ConfigError(violations_);
  }

 private:
  template <typename T>
  T fail(const std::string& key, const std::string& what, T fallback) {
    violations_.push_back(key + " must be " + what + ", got '" + text(key) + "'");
    return fallback;
  }

  const Settings& s_;
  std::vector<std::string> violations_;
};

std::optional<SelectionMetric> parse_selection(std::string_view s) {
  if (s == "macro_f1") return SelectionMetric::macro_f1;
  if (s == "accuracy") return SelectionMetric::accuracy;
  return std::nullopt;
}

std::optional<FinetuneMode> parse_mode(std::string_view s) {
  if (s == "full") return FinetuneMode::full;
  if (s == "adapter") return FinetuneMode::adapter;
  return std::nullopt;
}

std::optional<std::string> parse_split(std::string_view s) {
  if (s == "train" || s == "validation" || s == "test") return std::string(s);
  return std::nullopt;
}

std::optional<std::string> parse_backend(std::string_view s) {
  if (s == "tiny" || s == "stub" || s == "remote") return std::string(s);
  return std::nullopt;
}

const std::vector<EditSample>& pick(const DatasetSplit& d, std::string_view split) {
  if (split == "train") return d.train;
  if (split == "validation") return d.validation;
  return d.test;
}

DatasetSplit load_data(const fs::path& dir, const TaskSpec& task) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  return load_split(dir, task.input_arity == InputArity::pair ? Schema::edits : Schema::singles, &task.label_set);
}

/// Context shared by command handlers.
struct Run {
  std::string command;
  Settings settings;
  std::set<std::string> explicit_keys;
  fs::path dir;
  std::ostream& out;
  std::ostream& err;

  std::uint64_t seed() const { return std::stoull(settings.at("seed")); }

  void write(const std::string& name, std::string_view content) const {
    write_file(dir / name, content);
  }
};

void prepare(Run& run) {
  run.dir = fs::path(run.settings.at("out_dir")) / (run.command + "-" + config_hash(run.settings));
  fs::create_directories(run.dir);
  Settings stored;
  for (const auto& [k, v] : run.settings) {
    if (k != "resume") stored[k] = v;
  }
  run.write("config.txt", render_config(stored));
}

// ---------------------------------------------------------------------------
// train

struct TrainPlan {
  const TaskSpec* task = nullptr;
  TrainConfig cfg;
  TinyEncoder::Options encoder;
  fs::path data;
  int resume = 0;
};

TrainPlan plan_train(const Run& run) {
  Reader r(run.settings);
  TrainPlan p;
  try {
    p.task = &find_task(r.text("task"));
  } catch (const DataError&) {
    r.violation("task '" + r.text("task") + "' is not registered");
  }
  auto& a = p.cfg.approach;
  a.approach = r.choice("approach", parse_approach, Approach::seqc);
  if (auto f = parse_input_format(r.text("format"))) {
    a.format = *f;
  } else {
    r.violation("format must be natural, structured, inst+natural or inst+structured, got '" + r.text("format") + "'");
  }
  const auto& t = r.text("transform");
  const bool encodes_pair = a.approach == Approach::snet || a.approach == Approach::xnet;
  if (t == "none" || t == "auto") {
    if (t == "none" && encodes_pair) r.violation("transform none is only valid for seqc and gen");
  } else if (auto k = parse_transform(t)) {
    if (!encodes_pair) r.violation("transform applies only to snet and xnet; use none for " + r.text("approach"));
    a.transform = *k;
  } else {
    r.violation("transform must be diff, diffABS, n-diffABS, n-o, n-diffABS-o, none or auto, got '" + t + "'");
  }
  if (p.task && encodes_pair && p.task->input_arity == InputArity::single) {
    r.violation(r.text("approach") + " needs a sentence-pair task, but " + p.task->task_id + " has single inputs");
  }
  p.cfg.selection = r.choice("selection", parse_selection, SelectionMetric::macro_f1);

  const bool preset = r.boolean("finetune.preset");
  if (preset) {
    for (const auto* k : {"finetune.mode", "finetune.rank", "finetune.alpha", "finetune.dropout", "finetune.epochs"}) {
      if (run.explicit_keys.count(k)) r.violation(std::string(k) + " conflicts with finetune.preset");
    }
    if (p.task) p.cfg.finetune = finetune_preset(p.task->task_id, a.approach);
  } else {
    auto& f = p.cfg.finetune;
    f.mode = r.choice("finetune.mode", parse_mode, FinetuneMode::full);
    f.adapter_rank = static_cast<int>(r.integer("finetune.rank", 0));
    f.adapter_alpha = static_cast<int>(r.integer("finetune.alpha", 0));
    f.adapter_dropout = r.real("finetune.dropout");
    f.epochs = static_cast<int>(r.integer("finetune.epochs", 1));
  }
  p.cfg.finetune.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
  p.cfg.optimizer.learning_rate = r.real("optim.lr");
  p.cfg.optimizer.batch_size = static_cast<int>(r.integer("optim.batch_size", 1));
  p.cfg.optimizer.warmup_fraction = r.real("optim.warmup");
  try {
    validate(p.cfg);
  } catch (const ConfigError& e) {
    r.absorb(e);
  }

  if (r.text("backend") != "tiny") r.violation("training needs backend tiny, got '" + r.text("backend") + "'");
  p.encoder.dim = static_cast<int>(r.integer("backend.dim", 1));
  p.encoder.buckets = static_cast<int>(r.integer("backend.buckets", 1));
  p.encoder.seed = p.cfg.finetune.seed;
  if (a.approach == Approach::gen && p.task) p.encoder.output_vocab = p.task->label_set.names();
  if (p.encoder.dim >= 1 && head_input_dim(a, p.encoder.dim) != p.encoder.dim * (encodes_pair ? output_blocks(a.transform) : 1)) {
    r.violation("head input width does not match the encoder width");
  }
  r.require("data");
  p.data = r.text("data");
  p.resume = static_cast<int>(r.integer("resume", 0));
  if (p.resume > p.cfg.finetune.epochs) r.violation("resume epoch exceeds finetune.epochs");
  r.finish();
  return p;
}

void cmd_train(Run& run) {
  auto plan = plan_train(run);
  const auto data = load_data(plan.data, *plan.task);
  prepare(run);
  plan.cfg.checkpoint_dir = run.dir;
  TinyEncoder encoder(plan.encoder);
  const auto result = plan.resume > 0 ? resume(plan.cfg, *plan.task, data, encoder, plan.resume)
                                      : train(plan.cfg, *plan.task, data, encoder);
  run.out << "epoch  train_loss  val_acc  val_m.f1  val_AIR\n";
  char buf[128];
  for (const auto& e : result.trace) {
    std::snprintf(buf, sizeof buf, "%5d  %10.4f  %7.4f  %8.4f  %7.4f%s\n", e.epoch, e.train_loss, e.val_accuracy,
                  e.val_macro_f1, e.val_air, e.epoch == result.selected_epoch ? "  *" : "");
    run.out << buf;
  }
  run.out << "selected epoch " << result.selected_epoch << ": "
          << checkpoint_path(run.dir, result.selected_epoch).string() << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

struct Loaded {
  std::unique_ptr<Backend> backend;
  std::optional<Classifier> classifier;
  std::string id;  // stable model identifier for provenance
};

fs::path resolve_checkpoint(const fs::path& p) {
  if (!fs::is_directory(p)) return p;
  const auto metrics = p / "metrics.json";
  if (!fs::exists(metrics)) throw DataError(p.string() + " is neither a checkpoint nor a training run");
  try {
    return checkpoint_path(p, nlohmann::json::parse(read_file(metrics)).at("selected_epoch").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + metrics.string() + ": " + e.what());
  }
}

Loaded load_checkpoint(const fs::path& where) {
  const auto path = resolve_checkpoint(where);
  if (!fs::exists(path)) throw DataError("checkpoint " + path.string() + " does not exist");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto payload = open_checkpoint(doc);
  if (payload.at("backend").value("kind", "") != "tiny") {
    throw ModelError("checkpoint " + path.string() + " was trained on an external backend and cannot be loaded here");
  }
  auto [encoder, classifier] = load_tiny_checkpoint(payload);
  Loaded l;
  l.backend = std::move(encoder);
  l.classifier.emplace(std::move(classifier));
  l.id = "tiny-" + doc.at("checksum").get<std::string>();
  return l;
}

void cmd_evaluate(Run& run) {
  Reader r(run.settings);
  r.require("data");
  const auto split = r.choice("split", parse_split, std::string("test"));
  const auto& ckpt = r.text("checkpoint");
  const auto backend_kind = r.choice("backend", parse_backend, std::string("tiny"));
  std::optional<InputFormat> fmt = parse_input_format(r.text("format"));
  if (!fmt) r.violation("format must be natural, structured, inst+natural or inst+structured");
  if (ckpt.empty()) {
    if (r.text("approach") != "gen") r.violation("checkpoint is required unless approach is gen");
    if (backend_kind == "tiny") r.violation("zero-shot generation needs backend stub or remote");
    if (backend_kind == "remote" && r.text("backend.model").empty()) r.violation("backend.model is required for remote");
  } else {
    for (const auto* k : {"approach", "format", "task", "backend"}) {
      if (run.explicit_keys.count(k)) r.violation(std::string(k) + " comes from the checkpoint and cannot be set");
    }
  }
  r.finish();

  Loaded model;
  if (!ckpt.empty()) {
    model = load_checkpoint(ckpt);
  } else {
    const auto& task = find_task(r.text("task"));
    ApproachConfig cfg{Approach::gen, TransformKind::diff_abs, *fmt};
    model.classifier.emplace(cfg, task, 1, run.seed());
    if (backend_kind == "stub") {
      model.backend = std::make_unique<StubBackend>();
      model.id = "stub";
    } else {
      ModelInfo info;
      info.name = r.text("backend.model");
      model.backend = std::make_unique<RemoteGenerator>(info, RemoteSettings::from_environment());
      model.id = "remote-" + info.name;
    }
  }
  const auto& clf = *model.classifier;
  const auto data = load_data(r.text("data"), clf.task());
  const auto& samples = pick(data, split);
  if (samples.empty()) throw DataError("split " + split + " is empty");
  prepare(run);
  const auto result = evaluate(clf, *model.backend, samples);

  const std::string name = model.id + " " + std::string(to_string(clf.config().approach));
  nlohmann::ordered_json j;
  j["name"] = name;
  j["model"] = model.id;
  j["task"] = clf.task().task_id;
  j["approach"] = to_string(clf.config().approach);
  j["split"] = split;
  j["report"] = result.report.to_json();
  j["invocations"] = {{"encode_passes", result.counts.encode_passes}, {"decode_steps", result.counts.decode_steps}};
  run.write("metrics.json", j.dump(2) + "\n");
  std::string preds;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& p = result.predictions[i];
    nlohmann::ordered_json row;
    row["edit_id"] = samples[i].edit_id;
    row["gold"] = *samples[i].intent;
    row["label"] = p.label ? nlohmann::ordered_json(*p.label) : nlohmann::ordered_json();
    row["answer_included"] = p.answer_included;
    if (p.raw_output) row["raw_output"] = *p.raw_output;
    preds += row.dump() + "\n";
  }
  run.write("predictions.jsonl", preds);
  const std::vector<std::pair<std::string, MetricsReport>> rows = {{name, result.report}};
  const auto table = render_table(rows);
  run.write("table.txt", table);
  run.out << table << "wrote " << (run.dir / "metrics.json").string() << "\n";
}

// ---------------------------------------------------------------------------
// align / annotate

AlignmentParams alignment_params(Reader& r) {
  AlignmentParams p;
  p.jaccard_threshold = r.real("alignment.threshold");
  p.window = static_cast<int>(r.integer("alignment.window", 0));
  if (!(p.jaccard_threshold > 0.0 && p.jaccard_threshold <= 1.0)) r.violation("alignment.threshold must lie in (0, 1]");
  return p;
}

struct AlignmentModel {
  Loaded model;
  std::unique_ptr<ClassifierPairScorer> scorer;
};

std::optional<AlignmentModel> load_alignment_model(const std::string& path) {
  if (path.empty()) return std::nullopt;
  AlignmentModel m;
  m.model = load_checkpoint(path);
  m.scorer = std::make_unique<ClassifierPairScorer>(*m.model.classifier, *m.model.backend);
  return m;
}

void cmd_align(Run& run) {
  Reader r(run.settings);
  r.require("input");
  const auto params = alignment_params(r);
  r.finish();
  const auto docs = load_revisions(r.text("input"));
  auto am = load_alignment_model(r.text("alignment.checkpoint"));
  prepare(run);
  std::string alignments, edits;
  std::size_t n_pairs = 0, n_added = 0, n_deleted = 0, n_edits = 0;
  for (const auto& d : docs) {
    const auto res = align(d.old_sentences, d.new_sentences, am ? am->scorer.get() : nullptr, params);
    res.check(d.old_sentences.size(), d.new_sentences.size());
    nlohmann::ordered_json j;
    j["doc_id"] = d.doc_id;
    const auto body = to_json(res);
    for (const auto& [k, v] : body.items()) j[k] = v;
    alignments += j.dump() + "\n";
    const auto e = derive_edits(res, d);
    edits += emit_edits(e);
    n_pairs += res.pairs.size();
    n_added += res.added.size();
    n_deleted += res.deleted.size();
    n_edits += e.size();
  }
  run.write("alignments.jsonl", alignments);
  run.write("edits.jsonl", edits);
  run.out << docs.size() << " documents: " << n_pairs << " pairs, " << n_added << " added, " << n_deleted
          << " deleted, " << n_edits << " edits\nwrote " << run.dir.string() << "\n";
}

void cmd_annotate(Run& run) {
  Reader r(run.settings);
  r.require("input");
  r.require("checkpoint");
  AnnotateConfig cfg;
  cfg.alignment = alignment_params(r);
  cfg.batch_size = static_cast<std::size_t>(r.integer("annotate.batch_size", 1));
  cfg.jobs = static_cast<std::size_t>(r.integer("jobs", 1));
  r.finish();
  const auto docs = load_revisions(r.text("input"));
  auto intent = load_checkpoint(r.text("checkpoint"));
  ClassifierLabeler labeler(*intent.classifier, *intent.backend, intent.id);
  auto am = load_alignment_model(r.text("alignment.checkpoint"));
  prepare(run);
  const auto out = annotate(docs, cfg, labeler, am ? am->scorer.get() : nullptr, am ? am->model.id : "");
  if (out.documents.empty() && !out.failures.empty()) {
    throw DataError("every document failed; first: " + out.failures.front().doc_id + ": " + out.failures.front().message);
  }
  nlohmann::json extra;
  extra["config_hash"] = config_hash(run.settings);
  extra["seed"] = run.seed();
  extra["intent_model"] = intent.id;
  extra["alignment_model"] = am ? am->model.id : "";
  write_corpus(run.dir, out, extra);
  const auto stats = corpus_stats(out.documents);
  run.out << render_stats(stats);
  for (const auto& f : out.failures) run.err << "failed " << f.doc_id << ": " << f.message << "\n";
  run.out << "wrote " << (run.dir / "annotated.jsonl").string() << "\n";
}

// ---------------------------------------------------------------------------
// analyze / report

std::vector<AnnotatedRevision> load_corpus(const fs::path& p) {
  return load_annotated(fs::is_directory(p) ? p / "annotated.jsonl" : p);
}

void merge_scores(std::vector<AnnotatedRevision>& docs, const fs::path& path) {
  std::map<std::string, AnnotatedRevision*> by_id;
  for (auto& d : docs) by_id[d.doc_id] = &d;
  std::istringstream in(read_file(path));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("doc_id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("unknown doc_id '" + id + "'", line_no, "doc_id");
      it->second->review_scores_old = j.at("review_scores_old").get<std::vector<std::string>>();
      it->second->review_scores_new = j.at("review_scores_new").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), line_no);
    }
  }
}

void cmd_analyze(Run& run) {
  Reader r(run.settings);
  r.require("corpus");
  AnalysisOptions opts;
  opts.bins = static_cast<int>(r.integer("analysis.bins", 1));
  opts.full_grid = r.boolean("analysis.full_grid");
  opts.kl_epsilon = r.real("analysis.kl_epsilon");
  if (!(opts.kl_epsilon > 0.0)) r.violation("analysis.kl_epsilon must be > 0");
  r.finish();
  auto docs = load_corpus(r.text("corpus"));
  if (!r.text("scores").empty()) merge_scores(docs, r.text("scores"));
  const auto rep = analyze(docs, opts);
  prepare(run);
  run.write("report.json", rep.json.dump(2) + "\n");
  for (const auto& [name, content] : rep.csv) run.write(name, content);

  const auto& reg = rep.json.at("regression");
  if (reg.contains("error")) {
    run.out << "regression: " << reg.at("error").get<std::string>() << "\n";
  } else {
    char buf[160];
    run.out << "name                      coef   std.err         p\n";
    for (const auto& c : reg.at("coefficients")) {
      std::snprintf(buf, sizeof buf, "%-20s %9.3f %9.3f %9.3f\n", c.at("name").get<std::string>().c_str(),
                    c.at("coef").get<double>(), c.at("std_error").get<double>(), c.at("p_value").get<double>());
      run.out << buf;
    }
    std::snprintf(buf, sizeof buf, "LLR %.3f  p %.4f\n", reg.at("llr").get<double>(), reg.at("llr_p").get<double>());
    run.out << buf;
  }
  run.out << "wrote " << (run.dir / "report.json").string() << "\n";
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport m;
  m.n = j.at("n").get<std::size_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.macro_f1 = j.at("macro_f1").get<double>();
  m.air = j.at("air").get<double>();
  m.throughput = j.at("throughput").get<double>();
  return m;
}

void cmd_report(Run& run) {
  Reader r(run.settings);
  const auto n_review = static_cast<std::size_t>(r.integer("review.sample", 0));
  if (r.text("corpus").empty() && r.text("worksheet").empty() && r.text("metrics").empty()) {
    r.violation("report needs corpus, worksheet or metrics");
  }
  if (n_review > 0 && r.text("corpus").empty()) r.violation("review.sample needs corpus");
  r.finish();
  std::vector<std::pair<std::string, std::string>> outputs;
  if (!r.text("corpus").empty()) {
    const auto docs = load_corpus(r.text("corpus"));
    outputs.emplace_back("stats.txt", render_stats(corpus_stats(docs)));
    if (n_review > 0) outputs.emplace_back("worksheet.csv", sample_for_review(docs, n_review, run.seed()));
  }
  if (!r.text("worksheet").empty()) {
    const auto scores = score_worksheet(read_file(r.text("worksheet")));
    outputs.emplace_back("review.txt", render_review(scores, LabelSet::edit_intents()));
  }
  if (!r.text("metrics").empty()) {
    std::vector<std::pair<std::string, MetricsReport>> rows;
    std::istringstream in(r.text("metrics"));
    for (std::string file; std::getline(in, file, ',');) {
      file = trim(file);
      if (file.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(read_file(file));
        rows.emplace_back(j.at("name").get<std::string>(), report_from_json(j.at("report")));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(file + ": " + e.what());
      }
    }
    outputs.emplace_back("table.txt", render_table(rows));
  }
  prepare(run);
  for (const auto& [name, content] : outputs) {
    run.write(name, content);
    if (name != "worksheet.csv") run.out << content;
  }
  run.out << "wrote " << run.dir.string() << "\n";
}

using Handler = void (*)(Run&);

Handler handler_for(std::string_view command) {
  if (command == "train") return cmd_train;
  if (command == "evaluate") return cmd_evaluate;
  if (command == "align") return cmd_align;
  if (command == "annotate") return cmd_annotate;
  if (command == "analyze") return cmd_analyze;
  return cmd_report;
}

}  // namespace

Settings parse_config(std::string_view text) {
  Settings s;
  std::vector<std::string> violations;
  std::string section;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    auto line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        violations.push_back(where + "unterminated section header");
        continue;
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      violations.push_back(where + "expected key = value");
      continue;
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (!find_key(key)) {
      violations.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    s[key] = trim(std::string_view(line).substr(eq + 1));
  }
  if (!violations.empty()) throw ConfigError(violations);
  return s;
}

std::string render_config(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : s) out += k + " = " + v + "\n";
  return out;
}

Settings defaults_for(std::string_view command) {
  const auto bit = command_bit(command);
  Settings s;
  for (const auto& k : kKeys) {
    if (k.commands & bit) s[std::string(k.name)] = std::string(k.fallback);
  }
  return s;
}

std::string config_hash(const Settings& s) {
  std::string canon;
  for (const auto& [k, v] : s) {
    const auto* key = find_key(k);
    if (key && !key->hashed) continue;
    canon += k + "=" + v + "\n";
  }
  return hex64(fnv1a64(canon)).substr(0, 12);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edit intent classification: training, evaluation, revision alignment, auto-annotation "
               "and edit analytics.",
               "eic"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  const std::map<std::string_view, std::string_view> descriptions = {
      {"train", "Fine-tune an encoder and classifier head; writes per-epoch checkpoints and a metrics trace"},
      {"evaluate", "Score a checkpoint (or zero-shot generation) on a data split"},
      {"align", "Align old and new sentences of document revisions and derive edits"},
      {"annotate", "Align revisions and label every edit with an intent"},
      {"analyze", "Success regression, editing focus, edit positions, KL divergences and group tests"},
      {"report", "Corpus statistics, review worksheets and metrics tables"},
  };
  struct Bound {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
    bool flag = false;
    bool set = false;
  };
  std::map<std::string, std::vector<std::unique_ptr<Bound>>> bound;
  std::map<std::string, std::string> config_files;
  for (const auto& [name, bit] : kCommands) {
    auto* sub = app.add_subcommand(std::string(name), std::string(descriptions.at(name)));
    auto& cfg = config_files[std::string(name)];
    sub->add_option("--config", cfg, "flat key = value config file; flags override it")->type_name("FILE");
    for (const auto& k : kKeys) {
      if (!(k.commands & bit)) continue;
      auto b = std::make_unique<Bound>();
      b->key = std::string(k.name);
      b->flag = k.flag;
      std::string help = std::string(k.help) + " [" + b->key + "]";
      if (k.flag) {
        b->option = sub->add_flag(flag_name(k.name), b->set, help);
      } else {
        if (!k.fallback.empty()) help += " (default: " + std::string(k.fallback) + ")";
        b->option = sub->add_option(flag_name(k.name), b->value, help)->type_name("VALUE");
      }
      bound[std::string(name)].push_back(std::move(b));
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return static_cast<int>(ErrorKind::config);
  }

  std::string command;
  for (const auto& [name, _] : kCommands) {
    if (app.got_subcommand(std::string(name))) command = std::string(name);
  }

  try {
    Run run{command, defaults_for(command), {}, {}, out, err};
    if (const auto& file = config_files[command]; !file.empty()) {
      if (!fs::exists(file)) throw ConfigError({"config file " + file + " does not exist"});
      // A shared file may hold keys of other commands; only this command's keys apply.
      for (const auto& [k, v] : parse_config(read_file(file))) {
        if (run.settings.count(k)) {
          run.settings[k] = v;
          run.explicit_keys.insert(k);
        }
      }
    }
    for (const auto& b : bound[command]) {
      if (b->option->count() == 0) continue;
      run.settings[b->key] = b->flag ? "true" : b->value;
      run.explicit_keys.insert(b->key);
    }
    {
      Reader r(run.settings);
      r.integer("seed", 0);
      r.finish();
    }
    handler_for(command)(run);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::internal);
  }
}

}  // namespace eic::cli
