#include <doctest.h>

#include <filesystem>

#include "eic/error.hpp"
#include "eic/synthetic.hpp"
#include "eic/training.hpp"
#include "eic/util.hpp"

using namespace eic;

namespace {

TrainConfig small_config(Approach a, int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.approach.approach = a;
  cfg.approach.transform = TransformKind::n_diff_abs;
  cfg.approach.format = *parse_input_format("structured");
  cfg.finetune.mode = FinetuneMode::full;
  cfg.finetune.epochs = epochs;
  cfg.finetune.seed = seed;
  cfg.optimizer.learning_rate = 1e-2;
  return cfg;
}

TinyEncoder::Options encoder_options(std::uint64_t seed) {
  TinyEncoder::Options o;
  o.dim = 16;
  o.seed = seed;
  return o;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("eic-train-" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

EpochRecord rec(int epoch, double acc, double f1) {
  EpochRecord r;
  r.epoch = epoch;
  r.val_accuracy = acc;
  r.val_macro_f1 = f1;
  return r;
}

}  // namespace

TEST_CASE("epoch selection prefers the metric, then the other metric, then the earlier epoch") {
  const std::vector<EpochRecord> t = {rec(1, 0.5, 0.4), rec(2, 0.7, 0.6), rec(3, 0.8, 0.6), rec(4, 0.8, 0.6),
                                      rec(5, 0.9, 0.5)};
  CHECK(select_epoch(t, SelectionMetric::macro_f1) == 3);
  CHECK(select_epoch(t, SelectionMetric::accuracy) == 5);
  CHECK(select_epoch({rec(1, 0.5, 0.5), rec(2, 0.5, 0.5)}, SelectionMetric::macro_f1) == 1);
  CHECK_THROWS(select_epoch({}, SelectionMetric::accuracy));
}

TEST_CASE("training config validation enumerates violations") {
  auto cfg = small_config(Approach::seqc, 0, 1);
  cfg.optimizer.batch_size = 0;
  cfg.optimizer.learning_rate = -1;
  try {
    validate(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.violations().size() == 3);
  }
  CHECK(effective_learning_rate(OptimizerConfig{}, FinetuneMode::adapter) == doctest::Approx(2e-4));
  CHECK(effective_learning_rate(OptimizerConfig{}, FinetuneMode::full) == doctest::Approx(2e-5));
}

TEST_CASE("a run keeps one checkpoint per epoch and fits its training data") {
  const auto data = synth_intent_dataset(200, 50, 50, 2);
  const auto dir = scratch("epochs");
  auto cfg = small_config(Approach::seqc, 10, 2);
  cfg.checkpoint_dir = dir;
  TinyEncoder enc(encoder_options(2));
  const auto res = train(cfg, find_task("eic"), data, enc);
  CHECK(res.trace.size() == 10);
  CHECK(res.checkpoints.size() == 10);
  for (int e = 1; e <= 10; ++e) {
    CHECK(std::filesystem::exists(checkpoint_path(dir, e)));
    CHECK(res.trace[static_cast<std::size_t>(e - 1)].epoch == e);
  }
  CHECK(std::filesystem::exists(dir / "metrics.json"));
  CHECK(std::filesystem::exists(dir / "run.json"));
  CHECK(res.selected_epoch == select_epoch(res.trace, SelectionMetric::macro_f1));
  CHECK(res.selected == res.checkpoints[static_cast<std::size_t>(res.selected_epoch - 1)]);

  auto [model, clf] = load_tiny_checkpoint(open_checkpoint(res.selected));
  const auto fit = evaluate(clf, *model, data.train);
  CHECK(fit.report.accuracy >= 0.95);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training loss falls across seeds") {
  int falling = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto data = synth_intent_dataset(120, 20, 20, seed);
    TinyEncoder enc(encoder_options(seed));
    const auto res = train(small_config(Approach::xnet, 4, seed), find_task("eic"), data, enc);
    bool ok = true;
    for (std::size_t i = 1; i < res.trace.size(); ++i) ok = ok && res.trace[i].train_loss <= res.trace[i - 1].train_loss;
    falling += ok;
  }
  CHECK(falling >= 9);
}

TEST_CASE("resumed runs are bit-identical to uninterrupted ones") {
  const auto data = synth_intent_dataset(80, 20, 20, 4);
  for (auto a : {Approach::seqc, Approach::snet}) {
    const auto dir_a = scratch("full");
    const auto dir_b = scratch("resumed");
    auto cfg = small_config(a, 4, 4);
    cfg.finetune.mode = FinetuneMode::adapter;
    cfg.finetune.adapter_rank = cfg.finetune.adapter_alpha = 4;
    cfg.finetune.adapter_dropout = 0.1;
    cfg.checkpoint_dir = dir_a;
    TinyEncoder first(encoder_options(4));
    const auto full = train(cfg, find_task("eic"), data, first);

    cfg.checkpoint_dir = dir_b;
    for (int e = 1; e <= 2; ++e) {
      std::filesystem::create_directories(checkpoint_path(dir_b, e).parent_path());
      std::filesystem::copy_file(checkpoint_path(dir_a, e), checkpoint_path(dir_b, e));
    }
    TinyEncoder second(encoder_options(4));
    const auto resumed = resume(cfg, find_task("eic"), data, second, 2);
    REQUIRE(resumed.trace.size() == full.trace.size());
    for (std::size_t i = 0; i < full.trace.size(); ++i) {
      CHECK(resumed.trace[i].train_loss == full.trace[i].train_loss);
      CHECK(resumed.trace[i].val_macro_f1 == full.trace[i].val_macro_f1);
    }
    CHECK(resumed.selected_epoch == full.selected_epoch);
    for (int e = 3; e <= 4; ++e) {
      CHECK(read_file(checkpoint_path(dir_a, e)) == read_file(checkpoint_path(dir_b, e)));
    }
    TinyEncoder third(encoder_options(4));
    CHECK_THROWS_AS(resume(cfg, find_task("eic"), data, third, 5), ModelError);
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
  }
}

TEST_CASE("sealed checkpoints reject tampering") {
  const auto doc = seal_checkpoint({{"epoch", 1}, {"weights", {1.5, 2.5}}});
  CHECK(open_checkpoint(doc)["epoch"] == 1);
  auto bad = doc;
  bad["payload"]["weights"][0] = 1.25;
  CHECK_THROWS_AS(open_checkpoint(bad), ModelError);
  bad = doc;
  bad["format_version"] = kCheckpointVersion + 1;
  CHECK_THROWS_AS(open_checkpoint(bad), ModelError);
  CHECK_THROWS_AS(open_checkpoint(nlohmann::json::parse("[1,2]")), ModelError);
  const auto dir = scratch("missing");
  CHECK_THROWS_AS(read_checkpoint(dir / "nope.json"), ModelError);
}

TEST_CASE("encoder options round-trip through checkpoints") {
  TinyEncoder::Options o;
  o.dim = 12;
  o.buckets = 99;
  o.seed = 77;
  o.arch = Architecture::encoder_only;
  o.output_vocab = {"yes", "no"};
  const auto back = tiny_options_from_json(to_json(o));
  CHECK(back.dim == 12);
  CHECK(back.buckets == 99);
  CHECK(back.seed == 77);
  CHECK(back.arch == Architecture::encoder_only);
  CHECK(back.output_vocab == o.output_vocab);
}

TEST_CASE("exploding updates surface as numeric errors") {
  const auto data = synth_intent_dataset(40, 10, 10, 1);
  auto cfg = small_config(Approach::seqc, 3, 1);
  cfg.optimizer.learning_rate = 1e300;
  cfg.optimizer.warmup_fraction = 0;
  TinyEncoder enc(encoder_options(1));
  CHECK_THROWS_AS(train(cfg, find_task("eic"), data, enc), NumericError);
  DatasetSplit empty;
  TinyEncoder enc2(encoder_options(1));
  CHECK_THROWS_AS(train(small_config(Approach::seqc, 1, 1), find_task("eic"), empty, enc2), DataError);
}

TEST_CASE("generative fine-tuning learns to emit labels") {
  const auto data = synth_intent_dataset(150, 30, 30, 3);
  auto o = encoder_options(3);
  o.output_vocab = LabelSet::edit_intents().names();
  TinyEncoder enc(o);
  auto cfg = small_config(Approach::gen, 5, 3);
  cfg.approach.format = *parse_input_format("inst+structured");
  const auto res = train(cfg, find_task("eic"), data, enc);
  CHECK(res.trace.back().train_loss < res.trace.front().train_loss);
  CHECK(res.trace[static_cast<std::size_t>(res.selected_epoch - 1)].val_air > 0.9);
}
