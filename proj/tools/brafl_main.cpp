#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brafl/experiment.hpp"
#include "selftest.hpp"

namespace {

struct ErrorLine {
  std::string verb;
  std::string message;
};

void print_error(const ErrorLine& e) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["verb"] = e.verb;
  j["message"] = e.message;
  std::cerr << j.dump() << '\n';
}

std::vector<double> parse_epsilons(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw brafl::Error("--epsilons: cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw brafl::Error("--epsilons: empty list");
  return out;
}

void print_manifest(const brafl::RunManifest& m) {
  for (const auto& f : m.files) {
    std::cout << f.sha256 << "  " << (m.output_dir / f.name).string() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brafl: robust aggregation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string epsilons;

  auto* run = app.add_subcommand("run", "run one federated simulation");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory (default $BRAFL_OUT_DIR or brafl_out)");

  auto* sweep = app.add_subcommand("sweep", "run the config once per malicious fraction");
  sweep->add_option("config", config_path, "config template")->required();
  sweep->add_option("--epsilons", epsilons, "comma-separated fractions, e.g. 0,0.1,0.2")->required();
  sweep->add_option("--out", out_dir, "output directory");

  auto* oracle = app.add_subcommand("oracle-check", "verify the subset robustness certificate");
  oracle->add_option("config", config_path, "oracle config file")->required();

  auto* selftest = app.add_subcommand("selftest", "run the built-in property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error({"parse", e.what()});
    return 2;
  }

  std::string verb = app.get_subcommands().front()->get_name();
  try {
    const std::filesystem::path out = out_dir.empty() ? brafl::default_output_dir() : std::filesystem::path(out_dir);
    if (*run) {
      const auto cfg = brafl::parse_config(brafl::read_text_file(config_path));
      print_manifest(brafl::run_experiment(cfg, config_path, out));
    } else if (*sweep) {
      const std::string text = brafl::read_text_file(config_path);
      std::vector<brafl::SweepRow> rows;
      print_manifest(brafl::sweep(text, config_path, parse_epsilons(epsilons), out, &rows));
      for (const auto& r : rows) {
        std::printf("epsilon=%.2f acc=%.4f", r.epsilon, r.acc);
        if (r.asr) std::printf(" asr=%.4f", *r.asr);
        std::printf("\n");
      }
    } else if (*oracle) {
      const auto cfg = brafl::parse_oracle_config(brafl::read_text_file(config_path));
      const auto s = brafl::run_oracle_check(cfg);
      std::printf("instances=%zu certificate_failures=%zu worst_ratio=%.12f triangle_violations=%zu\n",
                  s.instances, s.certificate_failures, s.worst_ratio, s.triangle_violations);
      std::printf("bra_bound_satisfied=%zu/%zu bra_worst_ratio=%.6f\n", s.bra_bound_satisfied,
                  s.instances, s.bra_worst_ratio);
      if (s.certificate_failures > 0 || s.triangle_violations > 0) {
        print_error({verb, "certificate violated"});
        return 1;
      }
    } else if (*selftest) {
      if (!brafl_tools::run_selftest(std::cout)) {
        print_error({verb, "property check failed"});
        return 1;
      }
    }
  } catch (const std::exception& e) {
    print_error({verb, e.what()});
    return 1;
  }
  return 0;
}
