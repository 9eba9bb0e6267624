#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "neuroverb/ad/gradcheck.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/loss.hpp"
#include "neuroverb/trainer.hpp"
#include "support.hpp"

using namespace neuroverb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using T64 = ad::Tensor<double>;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.frame_size = 128;
  c.hop = 64;
  c.context = 1;
  c.bands = 4;
  c.conv_kernel = 8;
  c.local_kernel = 8;
  c.pool = 8;
  c.shared_lstm = {4};
  c.branch_lstm = 2;
  c.saaf_intervals = 5;
  c.sfir_units = 16;
  c.dnn_saaf = {4, 4};
  c.se_lstm = {4, 8, 4};
  c.dropout = 0.1;
  return c;
}

PairedDataset small_dataset() {
  std::vector<ClipPair> pairs;
  const auto ir = testing::decaying_velvet_ir(32, 10.0, 3);
  for (int i = 0; i < 4; ++i) {
    const auto dry = testing::random_signal(320, 100 + i, 0.4);
    pairs.push_back({AudioClip{dry, 16000}, AudioClip{dsp::convolve_truncated(dry, ir), 16000}, "c" + std::to_string(i)});
  }
  return PairedDataset(std::move(pairs), {Split::train, Split::train, Split::validation, Split::test});
}

std::vector<double> flat_params(const ReverbModel<float>& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

}  // namespace

TEST_CASE("loss closed forms", "[trainer][loss]") {
  const std::size_t n = 4096;
  SECTION("identical frames") {
    const auto y = T64::from({n}, std::vector<double>(n, 0.3));
    const auto lb = compute_loss(y, y);
    CHECK(lb.mae_time == 0.0);
    CHECK(lb.mse_spec == 0.0);
    CHECK(lb.total == 0.0);
  }
  SECTION("silence against a constant 0.1") {
    const auto lb = compute_loss(T64::zeros({n}), T64::full({n}, 0.1));
    const double mae = (0.1 + 4095 * 0.1 * 0.05) / 4096.0;
    CHECK_THAT(lb.mae_time, WithinAbs(mae, 1e-12));
    CHECK_THAT(lb.mae_time, WithinAbs(0.005023, 1e-6));
    // Only the DC bin differs: |X0| = 0.1 * 4096, every other bin is the floor.
    const double dc = std::log(std::pow(0.1 * 4096, 2) + 1e-10) - std::log(1e-10);
    const double mse = dc * dc / 2049.0;
    CHECK_THAT(lb.mse_spec, WithinRel(mse, 1e-9));
    CHECK_THAT(lb.total, WithinRel(mae + 1e-4 * mse, 1e-9));
  }
  SECTION("weights combine the terms") {
    Rng rng(1);
    const auto a = testing::random_tensor<double>({64}, rng);
    const auto b = testing::random_tensor<double>({64}, rng);
    const auto lb = compute_loss(a, b, LossConfig{2.0, 0.5, 0.95});
    CHECK_THAT(lb.total, WithinRel(2.0 * lb.mae_time + 0.5 * lb.mse_spec, 1e-12));
    CHECK_THAT(lb.objective.item(), WithinRel(lb.total, 1e-12));
  }
  SECTION("gradient on an eight-sample frame") {
    for (int point = 0; point < 5; ++point) {
      Rng rng(20 + point);
      const auto target = testing::random_tensor<double>({8}, rng);
      auto pred = testing::random_tensor<double>({8}, rng);
      CHECK(ad::finite_diff_check<double>([&](const T64& p) { return compute_loss(target, p).objective; }, pred) <
            1e-4);
    }
  }
  SECTION("length mismatch") {
    CHECK_THROWS_AS(compute_loss(T64::zeros({8}), T64::zeros({9})), ShapeError);
  }
}

TEST_CASE("config text", "[trainer][config]") {
  const auto cfg = parse_config(
      "preset = desk\n"
      "# comment\n"
      "learning_rate = 1e-3   # trailing\n"
      "patience = 7\n"
      "finetune = false\n"
      "shared_lstm = 12, 6\n");
  CHECK(cfg.model.frame_size == 512);
  CHECK(cfg.model.shared_lstm == std::vector<std::size_t>{12, 6});
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.train.patience == 7);
  CHECK_FALSE(cfg.train.finetune);

  const auto again = parse_config(format_config(cfg));
  CHECK(again.model == cfg.model);
  CHECK(again.loss == cfg.loss);
  CHECK(again.train == cfg.train);
  CHECK(parse_model_config(format_model_config(ModelConfig::full())) == ModelConfig::full());

  CHECK_THROWS_AS(parse_config("nonsense_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("patience = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("preset = huge\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("bands = 6\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.txt"), ConfigError);
  CHECK_NOTHROW(ModelConfig::desk().validate());
  CHECK_NOTHROW(ModelConfig::full().validate());
}

TEST_CASE("metrics tables and logs", "[trainer]") {
  MetricsTable t;
  t.rows = {{"a", 0.1, 10.0, 0.101}, {"b", 0.3, 30.0, 0.303}};
  t.mean = {"mean", 0.2, 20.0, 0.202};
  const auto csv = format_metrics_csv(t);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "id,mae,mse,loss");
  std::getline(is, line);
  CHECK(line == "a,0.1,10,0.101");
  std::getline(is, line);
  std::getline(is, line);
  CHECK(line == "mean,0.2,20,0.202");

  CHECK(format_log_line({3, "finetune", 7.5e-5, 0.5, 0.25}) == "3,finetune,7.5e-05,0.5,0.25");

  testing::TempDir dir("logs");
  write_training_log({{0, "main", 1e-4, 1.0, 2.0}}, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::getline(in, line);
  CHECK(line == kLogHeader);
}

TEST_CASE("compare_clips and evaluate", "[trainer]") {
  const AudioClip a{testing::random_signal(1000, 1), 16000};
  const auto self = compare_clips(a, a, 128, 64, LossConfig{}, "x");
  CHECK(self.id == "x");
  CHECK(self.mae == 0.0);
  CHECK(self.loss == 0.0);
  CHECK_THROWS_AS(compare_clips(a, AudioClip{{0.0f}, 16000}, 128, 64, LossConfig{}), ShapeError);

  const auto data = small_dataset();
  ReverbModel<float> model(small_config(), 3);
  const auto table = evaluate(model, data.subset(Split::train), LossConfig{});
  REQUIRE(table.rows.size() == 2);
  CHECK_THAT(table.mean.loss, WithinRel((table.rows[0].loss + table.rows[1].loss) / 2.0, 1e-12));
  for (const auto& r : table.rows) CHECK_THAT(r.loss, WithinRel(r.mae + 1e-4 * r.mse, 1e-9));
  CHECK_THROWS_AS(evaluate(model, {}, LossConfig{}), InvalidArgument);
}

TEST_CASE("spectrogram export", "[trainer]") {
  std::vector<float> x(256, 0.0f);
  x[0] = 1.0f;
  const auto s = compute_spectrogram(AudioClip{x, 16000}, 64, 32);
  REQUIRE(s.grid.size() == 8);
  CHECK(s.grid[0].size() == 33);
  CHECK_THAT(s.grid[0][5], WithinAbs(0.0, 1e-9));
  testing::TempDir dir("spec");
  write_spectrogram_csv(s, dir / "s.csv");
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 8);
}

TEST_CASE("training protocol", "[trainer]") {
  const auto data = small_dataset();
  RunConfig cfg;
  cfg.model = small_config();
  cfg.train.learning_rate = 1e-3;
  cfg.train.patience = 2;
  cfg.train.max_epochs = 6;
  cfg.train.seed = 17;

  ReverbModel<float> model(cfg.model, 1);
  std::vector<EpochLog> seen;
  const auto res = train(model, data, cfg, [&](const EpochLog& e) { seen.push_back(e); });

  REQUIRE_FALSE(res.log.empty());
  CHECK(seen.size() == res.log.size());
  std::size_t main = 0, fine = 0;
  for (std::size_t i = 0; i < res.log.size(); ++i) {
    const auto& e = res.log[i];
    CHECK(e.epoch == i);
    if (e.phase == "main") {
      CHECK(fine == 0);
      CHECK(e.lr == 1e-3);
      ++main;
    } else {
      CHECK(e.phase == "finetune");
      CHECK_THAT(e.lr, WithinRel(0.75e-3, 1e-12));
      ++fine;
    }
  }
  CHECK(main >= 1);
  CHECK(fine >= 1);

  double best = res.log.front().val_loss;
  for (const auto& e : res.log) best = std::min(best, e.val_loss);
  CHECK(res.best.best_val == best);
  CHECK(res.log[res.best.epoch].val_loss == best);

  // The model is left at the returned checkpoint.
  ReverbModel<float> restored(cfg.model);
  restore_parameters(restored, res.best);
  CHECK(flat_params(restored) == flat_params(model));

  SECTION("fixed seed reruns are identical") {
    ReverbModel<float> again(cfg.model, 1);
    const auto res2 = train(again, data, cfg);
    REQUIRE(res2.log.size() == res.log.size());
    for (std::size_t i = 0; i < res.log.size(); ++i) CHECK(res2.log[i].val_loss == res.log[i].val_loss);
    CHECK(flat_params(again) == flat_params(model));
  }
  SECTION("main phase only") {
    cfg.train.finetune = false;
    ReverbModel<float> m(cfg.model, 1);
    const auto r = train(m, data, cfg);
    for (const auto& e : r.log) CHECK(e.phase == "main");
  }
}

TEST_CASE("pretraining updates only the front-end", "[trainer]") {
  const auto data = small_dataset();
  RunConfig cfg;
  cfg.model = small_config();
  cfg.train.learning_rate = 1e-3;
  cfg.train.pretrain_max_epochs = 3;
  ReverbModel<float> model(cfg.model, 2);
  const auto before = model.clone();
  const auto res = pretrain(model, data, cfg);
  CHECK(res.log.size() == 3);
  const auto named = model.named_parameters();
  const auto old = before.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const bool same = std::equal(named[i].tensor.data().begin(), named[i].tensor.data().end(),
                                 old[i].tensor.data().begin());
    INFO(named[i].name);
    CHECK(same == (named[i].name.rfind("front_end.", 0) != 0));
  }
}

TEST_CASE("training input errors", "[trainer]") {
  RunConfig cfg;
  cfg.model = small_config();
  ReverbModel<float> model(cfg.model, 1);
  const AudioClip c{testing::random_signal(200, 1), 16000};
  const PairedDataset no_val({{c, c, "a"}, {c, c, "b"}}, {Split::train, Split::test});
  CHECK_THROWS_AS(train(model, no_val, cfg), InvalidArgument);
  CHECK_THROWS_AS(pretrain(model, no_val, cfg), InvalidArgument);

  const AudioClip fast{testing::random_signal(200, 1), 44100};
  const PairedDataset wrong_rate({{fast, fast, "a"}, {fast, fast, "b"}}, {Split::train, Split::validation});
  CHECK_THROWS_AS(train(model, wrong_rate, cfg), InvalidArgument);
}
