#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sharplab/error.hpp"
#include "sharplab/harness.hpp"

namespace {

using sharplab::ErrorKind;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kParse:
      return 2;
    case ErrorKind::kIo:
    case ErrorKind::kNotFound:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
    case ErrorKind::kShape:
    case ErrorKind::kInvalidArgument:
      return 5;
  }
  return 1;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) sharplab::fail(ErrorKind::kNotFound, "cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    sharplab::fail(ErrorKind::kConfig, path + ": " + e.what());
  }
}

/// Applies --seed-override and --out to the raw config before parsing.
nlohmann::json with_overrides(nlohmann::json j, const std::vector<std::uint64_t>& seeds, const std::string& out) {
  if (!seeds.empty()) j["seeds"] = seeds;
  if (!out.empty()) j["output_dir"] = out;
  return j;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharpness-aware training for long-tailed classification"};
  app.set_version_flag("--version", sharplab::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;
  std::string variants = "sgd,sam,imbsam,ccsam,focalsam";
  std::string checkpoint;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--seed-override", seeds, "Replace the config's seed list");
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_flag("--quiet", quiet, "Suppress per-epoch progress");
  };
  auto* run = app.add_subcommand("run", "Train every seed of one configuration");
  common(run);
  auto* cmp = app.add_subcommand("compare", "Run several optimizer variants on paired seeds");
  common(cmp);
  cmp->add_option("--variants", variants, "Comma-separated variant names");
  auto* diag = app.add_subcommand("diagnose", "Curvature, sharpness and bound diagnostics of a checkpoint");
  common(diag);
  diag->add_option("--checkpoint", checkpoint, "Checkpoint manifest (.json)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const nlohmann::json raw = with_overrides(read_json(config_path), seeds, out_dir);
    sharplab::RunOptions options;
    options.quiet = quiet;
    options.log = &std::cerr;

    if (*run) {
      const auto config = sharplab::parse_config(raw);
      const auto result = sharplab::run_experiment(config, options);
      std::cout << result.summary["aggregate"].dump(2) << "\n";
      std::cout << "wrote " << config.output_dir << "\n";
    } else if (*cmp) {
      const auto names = split_list(variants);
      for (const auto& n : names) sharplab::parse_variant(n);
      const auto table = sharplab::compare(names, raw, options);
      const std::string root = raw.value("output_dir", std::string("runs"));
      std::filesystem::create_directories(root);
      sharplab::write_comparison_csv(table, (std::filesystem::path(root) / "comparison.csv").string());
      std::cout << sharplab::format_comparison(table);
    } else if (*diag) {
      const auto config = sharplab::parse_config(raw);
      const auto params = sharplab::load_checkpoint(checkpoint);
      const std::string dir = out_dir.empty() ? (std::filesystem::path(config.output_dir) / "diagnose").string() : out_dir;
      std::cout << sharplab::diagnose(config, params, dir).dump(2) << "\n";
    }
  } catch (const sharplab::Error& e) {
    std::cerr << "error[" << sharplab::to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
