#include "brafl/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "brafl/oracle.hpp"

namespace brafl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

class KeyReader {
 public:
  explicit KeyReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {
    std::set<std::string> known;
    for (const auto& k : config_keys()) known.insert(k.name);
    for (const auto& [key, value] : kv_) {
      if (!known.contains(key)) throw Error("config: unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return kv_.contains(key); }

  std::string str(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it != kv_.end()) return it->second;
    for (const auto& k : config_keys()) {
      if (k.name == key) return k.default_value;
    }
    throw Error("config: no default for '" + key + "'");
  }

  std::string required(const std::string& key) const {
    if (!has(key)) throw Error("config: missing required key '" + key + "'");
    return kv_.at(key);
  }

  double real(const std::string& key) const { return to_real(key, str(key)); }

  std::size_t count(const std::string& key) const {
    const std::string v = str(key);
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      throw Error("config: key '" + key + "' must be a nonnegative integer, got '" + v + "'");
    }
    if (pos != v.size()) {
      throw Error("config: key '" + key + "' must be a nonnegative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(out);
  }

  static double to_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw Error("config: key '" + key + "' must be a real number, got '" + v + "'");
    }
    if (pos != v.size() || !std::isfinite(out)) {
      throw Error("config: key '" + key + "' must be a finite real number, got '" + v + "'");
    }
    return out;
  }

 private:
  std::map<std::string, std::string> kv_;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io: cannot write " + path.string());
  out << content;
  if (!out) throw Error("io: write failed for " + path.string());
}

EmittedFile emit(const std::filesystem::path& dir, const std::string& name,
                 const std::string& content) {
  write_file(dir / name, content);
  return EmittedFile{name, sha256_hex(content), content.size()};
}

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io: cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"dataset", "", "synthetic | idx (required)"},
      {"dataset.classes", "10", "number of classes"},
      {"dataset.features", "12", "synthetic feature dimension"},
      {"dataset.train_per_class", "200", "synthetic training samples per class"},
      {"dataset.test_per_class", "100", "synthetic test samples per class"},
      {"dataset.spread", "0.5", "synthetic blob standard deviation"},
      {"dataset.train_images", "", "IDX training images"},
      {"dataset.train_labels", "", "IDX training labels"},
      {"dataset.test_images", "", "IDX test images"},
      {"dataset.test_labels", "", "IDX test labels"},
      {"dataset.mean", "0", "IDX normalization mean (after scaling to [0,1])"},
      {"dataset.stddev", "1", "IDX normalization standard deviation"},
      {"partition.clients", "20", "number of clients N"},
      {"partition.alpha", "1.0", "Dirichlet concentration"},
      {"train.learning_rate", "0.01", "local SGD learning rate"},
      {"train.batch_size", "128", "mini-batch size (capped at partition size)"},
      {"train.local_epochs", "10", "local epochs per round"},
      {"train.momentum", "0.9", "Nesterov momentum"},
      {"train.weight_decay", "1e-4", "L2 penalty on weights"},
      {"aggregator", "", "bra | fedavg | median | trimmed_mean | geometric_median | multi_krum (required)"},
      {"aggregator.beta", "", "trimmed fraction per extreme (trimmed_mean)"},
      {"aggregator.krum_l", "", "retained updates L (multi_krum)"},
      {"aggregator.geomed_tolerance", "1e-10", "Weiszfeld subgradient tolerance"},
      {"aggregator.geomed_max_iters", "1000", "Weiszfeld iteration cap"},
      {"bra.max_iterations", "100", "EM iteration cap"},
      {"bra.pi_tolerance", "1e-8", "convergence threshold on max |delta pi|"},
      {"bra.sigma2_floor", "1e-12", "relative variance floor"},
      {"bra.pi_init", "0.5", "initial posterior"},
      {"bra.epsilon_lo", "", "lower epsilon clamp (default 1/(2K))"},
      {"bra.epsilon_hi", "0.5", "upper epsilon clamp"},
      {"attack", "none", "none | sign_flip | random_update | label_flip | backdoor"},
      {"attack.gamma", "4.0", "sign_flip / random_update scale"},
      {"attack.source_class", "0", "backdoor source class"},
      {"attack.target_class", "8", "backdoor target class"},
      {"attack.trigger", "vector", "vector | image"},
      {"attack.trigger_coordinate", "", "vector trigger coordinate (default features-1)"},
      {"attack.trigger_magnitude", "5.0", "vector trigger value"},
      {"attack.image_rows", "28", "image trigger: rows"},
      {"attack.image_cols", "28", "image trigger: cols"},
      {"attack.start_round", "0", "first round in which adversaries attack"},
      {"adversary.fraction", "0", "fraction of malicious clients (ids 0..M-1), M = round(fraction N)"},
      {"adversary.mode", "static", "static | dynamic"},
      {"adversary.active_probability", "0.5", "per-round attack probability (dynamic)"},
      {"adversary.seed", "", "schedule seed (default: seed)"},
      {"rounds", "", "communication rounds (required)"},
      {"eval_every", "1", "evaluate every n rounds (and the last round)"},
      {"seed", "0", "master seed"},
  };
  return keys;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config: line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config: line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) throw Error("config: duplicate key '" + key + "'");
  }
  return out;
}

FedRunConfig parse_config(const std::string& text,
                          const std::map<std::string, std::string>& overrides) {
  auto kv = parse_key_values(text);
  for (const auto& [k, v] : overrides) kv[k] = v;
  const KeyReader r(std::move(kv));
  FedRunConfig cfg;

  const std::string dataset = r.required("dataset");
  const std::size_t classes = r.count("dataset.classes");
  std::size_t features = 0;
  if (dataset == "synthetic") {
    SyntheticDataSpec syn;
    syn.num_classes = classes;
    syn.num_features = features = r.count("dataset.features");
    syn.train_per_class = r.count("dataset.train_per_class");
    syn.test_per_class = r.count("dataset.test_per_class");
    syn.spread = r.real("dataset.spread");
    if (syn.num_classes < 2) throw Error("config: dataset.classes must be >= 2");
    if (syn.num_features == 0) throw Error("config: dataset.features must be positive");
    if (syn.train_per_class == 0 || syn.test_per_class == 0) {
      throw Error("config: dataset.train_per_class and dataset.test_per_class must be positive");
    }
    if (!(syn.spread >= 0.0)) throw Error("config: dataset.spread must be nonnegative");
    cfg.data = syn;
  } else if (dataset == "idx") {
    IdxDataSpec idx;
    idx.train_images = r.required("dataset.train_images");
    idx.train_labels = r.required("dataset.train_labels");
    idx.test_images = r.required("dataset.test_images");
    idx.test_labels = r.required("dataset.test_labels");
    idx.num_classes = classes;
    idx.mean = r.real("dataset.mean");
    idx.stddev = r.real("dataset.stddev");
    if (!(idx.stddev > 0.0)) throw Error("config: dataset.stddev must be positive");
    cfg.data = idx;
  } else {
    throw Error("config: dataset must be 'synthetic' or 'idx', got '" + dataset + "'");
  }

  cfg.partition.num_clients = r.count("partition.clients");
  cfg.partition.alpha = r.real("partition.alpha");
  if (cfg.partition.num_clients < 2) throw Error("config: partition.clients must be >= 2");
  if (!(cfg.partition.alpha > 0.0)) throw Error("config: partition.alpha must be positive");
  const std::size_t n = cfg.partition.num_clients;

  cfg.training.learning_rate = r.real("train.learning_rate");
  cfg.training.batch_size = r.count("train.batch_size");
  cfg.training.local_epochs = r.count("train.local_epochs");
  cfg.training.momentum = r.real("train.momentum");
  cfg.training.weight_decay = r.real("train.weight_decay");
  cfg.training.validate();

  const std::string agg = r.required("aggregator");
  if (agg == "bra") {
    BraSettings s;
    s.max_iterations = r.count("bra.max_iterations");
    s.pi_tolerance = r.real("bra.pi_tolerance");
    s.sigma2_floor = r.real("bra.sigma2_floor");
    s.pi_init = r.real("bra.pi_init");
    if (r.has("bra.epsilon_lo") || r.has("bra.epsilon_hi")) {
      const double lo = r.has("bra.epsilon_lo") ? r.real("bra.epsilon_lo")
                                                : 1.0 / (2.0 * static_cast<double>(n));
      s.epsilon_clamp = EpsilonBounds{lo, r.real("bra.epsilon_hi")};
    }
    s.validate(n);
    cfg.aggregator = s;
  } else {
    BaselineSpec b;
    b.kind = parse_baseline_kind(agg);
    if (b.kind == BaselineKind::trimmed_mean) {
      if (!r.has("aggregator.beta")) throw Error("config: beta required for trimmed_mean");
      b.beta = r.real("aggregator.beta");
    }
    if (b.kind == BaselineKind::multi_krum) {
      if (!r.has("aggregator.krum_l")) throw Error("config: krum_l required for multi_krum");
      b.krum_l = r.count("aggregator.krum_l");
    }
    b.geomed_tolerance = r.real("aggregator.geomed_tolerance");
    b.geomed_max_iters = r.count("aggregator.geomed_max_iters");
    b.validate(n);
    cfg.aggregator = b;
  }

  const double fraction = r.real("adversary.fraction");
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw Error("config: adversary.fraction must lie in [0,1)");
  }
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction >= 0.5 || (m > 0 && 2 * m >= n)) {
    throw Error("config: adversary.fraction " + fmt(fraction, "%g") + " requires M < K/2");
  }
  for (std::size_t id = 0; id < m; ++id) cfg.schedule.malicious_ids.insert(id);
  const std::string mode = r.str("adversary.mode");
  if (mode == "static") {
    cfg.schedule.mode = AdversaryMode::static_mode;
  } else if (mode == "dynamic") {
    cfg.schedule.mode = AdversaryMode::dynamic_mode;
  } else {
    throw Error("config: adversary.mode must be 'static' or 'dynamic'");
  }
  cfg.schedule.active_probability = r.real("adversary.active_probability");

  r.required("rounds");
  cfg.rounds = r.count("rounds");
  cfg.eval_every = r.count("eval_every");
  cfg.master_seed = r.count("seed");
  cfg.schedule.schedule_seed = r.has("adversary.seed") ? r.count("adversary.seed") : cfg.master_seed;

  const std::string attack = r.str("attack");
  if (attack != "none") {
    AttackConfig a;
    a.kind = parse_attack_kind(attack);
    a.gamma = r.real("attack.gamma");
    a.source_class = static_cast<ClassId>(r.count("attack.source_class"));
    a.target_class = static_cast<ClassId>(r.count("attack.target_class"));
    a.start_round = r.count("attack.start_round");
    const std::string trigger = r.str("attack.trigger");
    if (trigger == "vector") {
      VectorTrigger v;
      v.coordinate = r.has("attack.trigger_coordinate") ? r.count("attack.trigger_coordinate")
                                                        : (features > 0 ? features - 1 : 0);
      v.magnitude = r.real("attack.trigger_magnitude");
      a.trigger = v;
    } else if (trigger == "image") {
      ImageTrigger img;
      img.rows = r.count("attack.image_rows");
      img.cols = r.count("attack.image_cols");
      if (const auto* idx = std::get_if<IdxDataSpec>(&cfg.data)) {
        img.value = (1.0 - idx->mean) / idx->stddev;
      }
      a.trigger = img;
    } else {
      throw Error("config: attack.trigger must be 'vector' or 'image'");
    }
    cfg.attack = a;
  }

  cfg.validate();
  return cfg;
}

double adversary_fraction(const FedRunConfig& config) {
  return static_cast<double>(config.schedule.malicious_ids.size()) /
         static_cast<double>(config.partition.num_clients);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string metrics_csv(const std::vector<RoundRecord>& records, std::size_t num_clients) {
  std::ostringstream out;
  out << "round,acc,asr,epsilon_hat";
  for (std::size_t k = 0; k < num_clients; ++k) out << ",pi_" << k;
  out << ",malicious_actual\n";
  for (const auto& rec : records) {
    if (!rec.evaluated) continue;
    out << rec.round << ',' << (rec.acc ? fmt(*rec.acc) : "") << ','
        << (rec.asr ? fmt(*rec.asr) : "") << ',' << (rec.epsilon_hat ? fmt(*rec.epsilon_hat) : "");
    for (std::size_t k = 0; k < num_clients; ++k) {
      out << ',';
      if (rec.pi) out << fmt((*rec.pi)[k]);
    }
    out << ',';
    bool first = true;
    for (std::size_t id : rec.actual_malicious) {
      if (!first) out << ';';
      out << id;
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

std::string pi_heatmap_svg(const std::vector<RoundRecord>& records, std::size_t num_clients) {
  constexpr int kCell = 12;
  constexpr int kMargin = 40;
  constexpr int kGap = 30;
  const int cols = static_cast<int>(num_clients);
  const int rows = static_cast<int>(records.size());
  const int panel = cols * kCell;
  const int width = 2 * kMargin + 2 * panel + kGap;
  const int height = 2 * kMargin + rows * kCell;

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<!-- brafl pi heatmap. Columns: clients 0.." << (cols - 1) << "; rows: rounds 0.."
      << (rows - 1) << " (top to bottom).\n"
      << "     Left panel: attack schedule, black = client submitted an attack, white = honest.\n"
      << "     Right panel: posterior benign probability pi, grey level = round(255*pi)\n"
      << "     (white = pi 1, black = pi 0). -->\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#dddddd\"/>\n"
      << "<text x=\"" << kMargin << "\" y=\"" << kMargin - 10
      << "\" font-family=\"sans-serif\" font-size=\"11\">attacking clients</text>\n"
      << "<text x=\"" << kMargin + panel + kGap << "\" y=\"" << kMargin - 10
      << "\" font-family=\"sans-serif\" font-size=\"11\">pi (benign probability)</text>\n";
  for (int t = 0; t < rows; ++t) {
    const auto& rec = records[static_cast<std::size_t>(t)];
    const int y = kMargin + t * kCell;
    for (int k = 0; k < cols; ++k) {
      const bool bad = rec.actual_malicious.contains(static_cast<std::size_t>(k));
      out << "<rect x=\"" << kMargin + k * kCell << "\" y=\"" << y << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"" << (bad ? "#000000" : "#ffffff") << "\"/>\n";
      const double pi = rec.pi ? (*rec.pi)[static_cast<std::size_t>(k)] : 0.0;
      const int g = static_cast<int>(std::lround(255.0 * std::clamp(pi, 0.0, 1.0)));
      char color[8];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", g, g, g);
      out << "<rect x=\"" << kMargin + panel + kGap + k * kCell << "\" y=\"" << y << "\" width=\""
          << kCell << "\" height=\"" << kCell << "\" fill=\"" << color << "\"><title>round " << t
          << " client " << k << " pi " << fmt(pi, "%.4f") << "</title></rect>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["config_path"] = config_path;
  j["output_dir"] = output_dir.string();
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    j["files"].push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  return j.dump(2) + "\n";
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("BRAFL_OUT_DIR"); env && *env) return env;
  return "brafl_out";
}

RunManifest run_experiment(const FedRunConfig& config, const std::string& config_path,
                           const std::filesystem::path& output_dir) {
  prepare_dir(output_dir);
  const auto records = run_federated(config);
  RunManifest manifest{config_path, output_dir, {}};
  const std::size_t n = config.partition.num_clients;
  manifest.files.push_back(emit(output_dir, "metrics.csv", metrics_csv(records, n)));
  if (config.uses_bra()) {
    manifest.files.push_back(emit(output_dir, "heatmap.svg", pi_heatmap_svg(records, n)));
  }
  write_file(output_dir / "manifest.json", manifest.to_json());
  return manifest;
}

RunManifest sweep(const std::string& config_text, const std::string& config_path,
                  const std::vector<double>& epsilons, const std::filesystem::path& output_dir,
                  std::vector<SweepRow>* rows) {
  if (epsilons.empty()) throw Error("sweep: no epsilons given");
  for (double e : epsilons) {
    if (!(e >= 0.0 && e < 0.5)) throw Error("sweep: epsilon " + fmt(e, "%g") + " requires M < K/2");
  }
  prepare_dir(output_dir);
  RunManifest manifest{config_path, output_dir, {}};
  std::vector<SweepRow> table;
  bool backdoor = false;
  for (double e : epsilons) {
    const FedRunConfig cfg = parse_config(config_text, {{"adversary.fraction", fmt(e, "%.17g")}});
    backdoor = cfg.has_backdoor();
    const auto records = run_federated(cfg);
    const std::string name = "metrics_eps" + fmt(e, "%.2f") + ".csv";
    manifest.files.push_back(emit(output_dir, name, metrics_csv(records, cfg.partition.num_clients)));
    SweepRow row{e, window_mean_acc(records, kSweepWindow), std::nullopt};
    if (backdoor && !cfg.schedule.malicious_ids.empty()) row.asr = window_mean_asr(records, kSweepWindow);
    table.push_back(row);
  }

  std::ostringstream summary;
  summary << (backdoor ? "epsilon,acc,asr\n" : "epsilon,acc\n");
  for (const auto& row : table) {
    summary << fmt(row.epsilon, "%.2f") << ',' << fmt(row.acc);
    if (backdoor) summary << ',' << (row.asr ? fmt(*row.asr) : "");
    summary << '\n';
  }
  manifest.files.push_back(emit(output_dir, "sweep_summary.csv", summary.str()));
  write_file(output_dir / "manifest.json", manifest.to_json());
  if (rows) *rows = std::move(table);
  return manifest;
}

OracleCheckConfig parse_oracle_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  OracleCheckConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "oracle.instances") {
      cfg.instances = static_cast<std::size_t>(KeyReader::to_real(key, value));
    } else if (key == "oracle.min_clients") {
      cfg.min_clients = static_cast<std::size_t>(KeyReader::to_real(key, value));
    } else if (key == "oracle.max_clients") {
      cfg.max_clients = static_cast<std::size_t>(KeyReader::to_real(key, value));
    } else if (key == "oracle.max_dims") {
      cfg.max_dims = static_cast<std::size_t>(KeyReader::to_real(key, value));
    } else if (key == "oracle.outlier_scale") {
      cfg.outlier_scale = KeyReader::to_real(key, value);
    } else if (key == "oracle.seed") {
      cfg.seed = static_cast<std::uint64_t>(KeyReader::to_real(key, value));
    } else {
      throw Error("oracle config: unknown key '" + key + "'");
    }
  }
  if (cfg.min_clients < 2 || cfg.max_clients < cfg.min_clients) {
    throw Error("oracle config: need 2 <= min_clients <= max_clients");
  }
  if (cfg.max_dims == 0) throw Error("oracle config: max_dims must be positive");
  return cfg;
}

OracleCheckSummary run_oracle_check(const OracleCheckConfig& config) {
  OracleCheckSummary s;
  Rng rng(config.seed, 0x0AC1E);
  for (std::size_t i = 0; i < config.instances; ++i) {
    const std::size_t k = config.min_clients + rng.index(config.max_clients - config.min_clients + 1);
    const std::size_t d = 1 + rng.index(config.max_dims);
    const std::size_t m = rng.index((k - 1) / 2 + 1);
    std::vector<std::vector<double>> pts(k, std::vector<double>(d));
    for (std::size_t c = 0; c < k; ++c) {
      for (auto& x : pts[c]) x = rng.normal();
    }
    for (std::size_t c = k - m; c < k; ++c) {
      for (auto& x : pts[c]) x += config.outlier_scale * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
    const auto updates = make_updates(pts);
    const auto sol = brute_force_subset(updates, m);
    const auto report = check_robust_bound(sol.centroid, updates, m);
    s.worst_ratio = std::max(s.worst_ratio, report.worst_ratio);
    if (!report.satisfied) ++s.certificate_failures;
    s.triangle_violations += count_triangle_violations(updates, sol.subset, m);
    const auto bra = aggregate_bra(updates);
    const auto bra_report = check_robust_bound(bra.mean, updates, m);
    if (bra_report.satisfied) ++s.bra_bound_satisfied;
    s.bra_worst_ratio = std::max(s.bra_worst_ratio, bra_report.worst_ratio);
    ++s.instances;
  }
  return s;
}

}  // namespace brafl
