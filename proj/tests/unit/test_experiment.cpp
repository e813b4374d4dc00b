#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <json.hpp>

#include "brafl/experiment.hpp"

using namespace brafl;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const char* env = std::getenv("BRAFL_TEST_TMP");
  const std::filesystem::path base = env && *env ? env : std::filesystem::temp_directory_path() / "brafl_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  return dir;
}

const std::string kMinimal = "dataset = synthetic\naggregator = bra\nrounds = 3\n";

const std::string kSmall =
    "dataset = synthetic\n"
    "dataset.train_per_class = 40\n"
    "dataset.test_per_class = 20\n"
    "partition.clients = 6\n"
    "partition.alpha = 100\n"
    "train.local_epochs = 2\n"
    "aggregator = bra\n"
    "rounds = 4\n";

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("defaults") {
  const auto cfg = parse_config(kMinimal);
  CHECK(cfg.partition.num_clients == 20);
  CHECK(cfg.partition.alpha == 1.0);
  CHECK(cfg.training.learning_rate == 0.01);
  CHECK(cfg.training.batch_size == 128);
  CHECK(cfg.training.local_epochs == 10);
  CHECK(cfg.training.momentum == 0.9);
  CHECK(cfg.training.weight_decay == 1e-4);
  CHECK(cfg.rounds == 3);
  CHECK(cfg.uses_bra());
  CHECK_FALSE(cfg.attack.has_value());
  CHECK(cfg.schedule.malicious_ids.empty());
  CHECK(adversary_fraction(cfg) == 0.0);
}

TEST_CASE("keys and comments") {
  const auto kv = parse_key_values("# comment\n a = 1 \n\nb=two # trailing\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two");
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), Error);
  CHECK_THROWS_AS(parse_key_values("just words\n"), Error);
  CHECK_THROWS_AS(parse_key_values(" = 3\n"), Error);
}

TEST_CASE("config errors") {
  auto fails_with = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
      return;
    }
    FAIL("no error for: " << text);
  };
  fails_with("dataset = synthetic\naggregator = trimmed_mean\nrounds = 3\n", "beta required");
  fails_with(kMinimal + "adversary.fraction = 0.6\nattack = sign_flip\n", "M < K/2");
  fails_with(kMinimal + "colour = blue\n", "unknown key");
  fails_with(kMinimal + "rounds = 4\n", "duplicate key");
  fails_with("dataset = synthetic\naggregator = bra\n", "rounds");
  fails_with(kMinimal + "train.batch_size = -4\n", "nonnegative integer");
  fails_with(kMinimal + "train.learning_rate = fast\n", "real number");
  fails_with(kMinimal + "aggregator.beta = 0.1\n" + "dataset.spread = nan\n", "finite");
  fails_with("dataset = cifar\naggregator = bra\nrounds = 3\n", "synthetic");
  fails_with(kMinimal + "adversary.mode = sometimes\n", "static");
  fails_with("dataset = synthetic\naggregator = multi_krum\nrounds = 3\n", "krum_l");
}

TEST_CASE("fraction to malicious ids") {
  const auto cfg = parse_config(kMinimal + "attack = sign_flip\nadversary.fraction = 0.2\n");
  CHECK(cfg.schedule.malicious_ids == std::set<std::size_t>{0, 1, 2, 3});
  CHECK(adversary_fraction(cfg) == doctest::Approx(0.2));
  const auto o = parse_config(kMinimal, {{"adversary.fraction", "0.1"}, {"attack", "backdoor"}});
  CHECK(o.schedule.malicious_ids.size() == 2);
  REQUIRE(o.attack.has_value());
  CHECK(o.attack->kind == AttackKind::backdoor);
  CHECK(std::get<VectorTrigger>(o.attack->trigger).coordinate == 11);
}

TEST_CASE("every documented key is accepted") {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    CHECK_FALSE(k.description.empty());
    CHECK(names.insert(k.name).second);
  }
  CHECK(names.contains("partition.alpha"));
  CHECK(names.contains("bra.pi_tolerance"));
}

TEST_CASE("metrics table layout") {
  std::vector<RoundRecord> recs(3);
  recs[0].round = 0;
  recs[0].evaluated = true;
  recs[0].acc = 0.5;
  recs[0].pi = std::vector<double>{1.0, 0.25};
  recs[0].epsilon_hat = 0.375;
  recs[0].actual_malicious = {0, 1};
  recs[1].round = 1;
  recs[2].round = 2;
  recs[2].evaluated = true;
  recs[2].acc = 1.0;
  recs[2].asr = 0.0;
  const auto csv = metrics_csv(recs, 2);
  std::istringstream in(csv);
  std::string header;
  std::string row0;
  std::string row2;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row2);
  CHECK(header == "round,acc,asr,epsilon_hat,pi_0,pi_1,malicious_actual");
  CHECK(row0 == "0,0.500000,,0.375000,1.000000,0.250000,0;1");
  CHECK(row2 == "2,1.000000,0.000000,,,,");
  CHECK(count_lines(csv) == 3);
}

TEST_CASE("heatmap has one cell pair per client and round") {
  std::vector<RoundRecord> recs(2);
  recs[0].pi = std::vector<double>{1.0, 0.0, 0.5};
  recs[1].pi = std::vector<double>{0.2, 0.9, 1.0};
  recs[1].actual_malicious = {0};
  const auto svg = pi_heatmap_svg(recs, 3);
  std::size_t rects = 0;
  for (std::size_t p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
  CHECK(rects == 1 + 2 * 2 * 3);
  CHECK(svg.find("#808080") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("run writes reproducible artefacts") {
  const auto cfg = parse_config(kSmall);
  const auto a = run_experiment(cfg, "small.cfg", scratch("run_a"));
  const auto b = run_experiment(cfg, "small.cfg", scratch("run_b"));
  REQUIRE(a.files.size() == 2);
  CHECK(a.files[0].name == "metrics.csv");
  CHECK(a.files[1].name == "heatmap.svg");
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    CHECK(a.files[i].sha256 == b.files[i].sha256);
    const auto text = read_text_file(a.output_dir / a.files[i].name);
    CHECK(sha256_hex(text) == a.files[i].sha256);
    CHECK(text.size() == a.files[i].bytes);
  }
  const auto metrics = read_text_file(a.output_dir / "metrics.csv");
  CHECK(count_lines(metrics) == 1 + 4);
  const auto manifest = nlohmann::json::parse(read_text_file(a.output_dir / "manifest.json"));
  CHECK(manifest["config_path"] == "small.cfg");
  CHECK(manifest["files"].size() == 2);

  const auto fedavg = parse_config(kSmall, {{"aggregator", "fedavg"}});
  const auto m = run_experiment(fedavg, "small.cfg", scratch("run_fedavg"));
  CHECK(m.files.size() == 1);
}

TEST_CASE("sweep summary") {
  std::vector<SweepRow> rows;
  const auto m = sweep(kSmall + "attack = sign_flip\n", "s.cfg", {0.0, 0.2}, scratch("sweep"), &rows);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].epsilon == 0.0);
  CHECK_FALSE(rows[0].asr.has_value());
  CHECK(m.files.back().name == "sweep_summary.csv");
  const auto summary = read_text_file(m.output_dir / "sweep_summary.csv");
  CHECK(summary.rfind("epsilon,acc\n0.00,", 0) == 0);
  CHECK(std::filesystem::exists(m.output_dir / "metrics_eps0.20.csv"));
  CHECK_THROWS_AS(sweep(kSmall, "s.cfg", {0.5}, scratch("sweep_bad"), nullptr), Error);
  CHECK_THROWS_AS(sweep(kSmall, "s.cfg", {}, scratch("sweep_bad"), nullptr), Error);
}

TEST_CASE("backdoor sweep has an attack success column") {
  std::vector<SweepRow> rows;
  const auto m = sweep(kSmall + "attack = backdoor\n", "s.cfg", {0.0, 0.2}, scratch("sweep_bd"), &rows);
  CHECK_FALSE(rows[0].asr.has_value());
  CHECK(rows[1].asr.has_value());
  const auto summary = read_text_file(m.output_dir / "sweep_summary.csv");
  CHECK(summary.rfind("epsilon,acc,asr\n", 0) == 0);
}

TEST_CASE("oracle check config and run") {
  const auto cfg = parse_oracle_config("oracle.instances = 20\noracle.max_clients = 7\noracle.seed = 3\n");
  CHECK(cfg.instances == 20);
  CHECK(cfg.min_clients == 4);
  CHECK(cfg.max_clients == 7);
  CHECK(cfg.seed == 3);
  CHECK_THROWS_AS(parse_oracle_config("oracle.colour = 1\n"), Error);
  CHECK_THROWS_AS(parse_oracle_config("oracle.min_clients = 9\noracle.max_clients = 5\n"), Error);
  const auto s = run_oracle_check(cfg);
  CHECK(s.instances == 20);
  CHECK(s.certificate_failures == 0);
  CHECK(s.triangle_violations == 0);
  CHECK(s.worst_ratio <= 1.0);
}

TEST_CASE("output directory default") {
  ::setenv("BRAFL_OUT_DIR", "/tmp/somewhere", 1);
  CHECK(default_output_dir() == std::filesystem::path("/tmp/somewhere"));
  ::unsetenv("BRAFL_OUT_DIR");
  CHECK(default_output_dir() == std::filesystem::path("brafl_out"));
}
