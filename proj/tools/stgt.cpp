// stgt: train, evaluate, verify and benchmark the spatio-temporal graph
// transformer toy. Every command writes <command>.txt/.json/.csv reports
// into out_dir and prints the text report to stdout.
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stgt/checkpoint.hpp"
#include "stgt/commands.hpp"
#include "stgt/config.hpp"
#include "stgt/error.hpp"

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed, out_dir, kernels, precision;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file");
  cmd->add_option("--set", c.sets, "Override a config key: key=value (value parsed as JSON)");
  cmd->add_option("--seed", c.seed, "Seed (overrides STGT_SEED)");
  cmd->add_option("--out-dir", c.out_dir, "Output directory (overrides STGT_OUT_DIR)");
  cmd->add_option("--kernels", c.kernels, "auto | scalar | avx2");
  cmd->add_option("--precision", c.precision, "float64 | float32");
}

stgt::RunConfig resolve(const Common& c) {
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& s : c.sets) {
    auto [key, value] = stgt::parse_assignment(s);
    overrides[key] = value;
  }
  if (!c.seed.empty()) overrides["seed"] = stgt::parse_assignment("seed=" + c.seed).second;
  if (!c.out_dir.empty()) overrides["out_dir"] = c.out_dir;
  if (!c.kernels.empty()) overrides["kernels"] = c.kernels;
  if (!c.precision.empty()) overrides["precision"] = c.precision;
  return stgt::resolve_config(c.config_file, stgt::process_env(), overrides);
}

int finish(const stgt::RunConfig& config, const stgt::Report& report) {
  report.write(config.out_dir);
  std::cout << report.to_text();
  return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph transformer toy: train, evaluate, verify, benchmark"};
  app.require_subcommand(1);

  Common common;
  std::string resume;
  std::string dump_path;

  auto* gen = app.add_subcommand("gen-data", "Regenerate the synthetic corpus and summarize it");
  auto* train = app.add_subcommand("train", "Two-stage training; writes checkpoints and the loss curve");
  auto* eval = app.add_subcommand("eval", "Retrieval metrics of a checkpoint on the training corpus");
  auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  auto* bench = app.add_subcommand("bench", "Sparse graph attention vs dense masked attention");
  auto* exp = app.add_subcommand("experiment", "gen-data, train, eval plus optional sweeps and ablation");
  auto* dgraph = app.add_subcommand("dump-graph", "NDJSON spatio-temporal graph of one item");
  auto* dattn = app.add_subcommand("dump-attention", "NDJSON graph-attention probabilities of one item");
  auto* keys = app.add_subcommand("config", "Print the resolved config as JSON");

  for (auto* cmd : {gen, train, eval, grad, bench, exp, dgraph, dattn, keys}) add_common(cmd, common);
  train->add_option("--resume", resume, "Resume from a checkpoint");
  for (auto* cmd : {eval, dgraph, dattn}) cmd->add_option("--checkpoint", common.checkpoint, "Checkpoint to load");
  for (auto* cmd : {dgraph, dattn}) cmd->add_option("-o,--output", dump_path, "NDJSON output path (default: out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stgt::kExitConfig;
  }

  try {
    const stgt::RunConfig config = resolve(common);
    if (keys->parsed()) {
      std::cout << config.to_json().dump(2) << "\n";
      return 0;
    }
    if (gen->parsed()) return finish(config, stgt::run_gen_data(config));
    if (train->parsed()) return finish(config, stgt::run_train(config, resume));
    if (eval->parsed()) return finish(config, stgt::run_eval(config, common.checkpoint));
    if (grad->parsed()) return finish(config, stgt::run_gradcheck(config));
    if (bench->parsed()) return finish(config, stgt::run_bench(config));
    if (exp->parsed()) return finish(config, stgt::run_experiment(config));
    for (auto* cmd : {dgraph, dattn}) {
      if (!cmd->parsed()) continue;
      const bool is_graph = cmd == dgraph;
      const std::filesystem::path path =
          dump_path.empty() ? std::filesystem::path(config.out_dir) /
                                  ((is_graph ? "graph_item" : "attention_item") + std::to_string(config.dump_item) +
                                   ".ndjson")
                            : std::filesystem::path(dump_path);
      std::ostringstream body;
      const stgt::Report report = is_graph ? stgt::run_dump_graph(config, body, common.checkpoint)
                                           : stgt::run_dump_attention(config, body, common.checkpoint);
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      stgt::write_file_atomic(path, body.str());
      return finish(config, report);
    }
  } catch (const std::exception& e) {
    std::cerr << "stgt: " << e.what() << "\n";
    return stgt::exit_code_for(e);
  }
  return stgt::kExitOther;
}
