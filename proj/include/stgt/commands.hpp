#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgt/config.hpp"
#include "stgt/retrieval.hpp"
#include "stgt/train.hpp"

namespace stgt {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitTolerance = 4,
};

/// Maps an exception escaping a command to its exit code.
int exit_code_for(const std::exception& e);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void add_row(std::vector<nlohmann::json> row);
  std::size_t column(const std::string& name) const;
  std::string to_text() const;
  /// Header row plus one line per row; reals printed round-trip exact.
  std::string to_csv() const;
};

struct Report {
  Report() = default;
  Report(std::string cmd, nlohmann::json cfg) : command(std::move(cmd)), config(std::move(cfg)) {}

  std::string command;
  nlohmann::json config;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<Table> tables;
  int exit_code = kExitOk;
  std::string diagnostic;

  const Table& table(const std::string& name) const;
  std::string to_text() const;
  nlohmann::json to_json() const;
  /// Writes <command>.txt, <command>.json and <command>.<table>.csv into `dir`.
  void write(const std::filesystem::path& dir) const;
};

/// Initial parameters of a run, with log_tau set from tau_init.
ModelParams initial_params(const RunConfig& config);

struct RunOutcome {
  TrainResult train;
  RetrievalReport retrieval;
};

/// Generates the corpus, trains, and evaluates on the training corpus at threshold_eval.
RunOutcome train_and_evaluate(const RunConfig& config);

RetrievalReport evaluate_params(const RunConfig& config, const StgtModel& model, const SyntheticCorpus& corpus,
                                const ModelParams& params, double threshold);

/// Per-segment analytic and central-difference gradients of the batch objective.
struct SegmentCheck {
  std::string segment;
  std::vector<double> analytic, numeric;
};

std::vector<SegmentCheck> check_composition(const StgtModel& model, const SyntheticCorpus& corpus,
                                            const ModelParams& params, const std::vector<std::size_t>& batch,
                                            double threshold, double alpha, double gamma, std::size_t coords,
                                            double eps, std::uint64_t seed);

/// Denominator floor of the relative error in gradient checks.
inline constexpr double kGradcheckFloor = 1e-6;
inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckToleranceF32 = 1e-2;

struct BenchRow {
  double threshold = 0.0;
  std::size_t nodes = 0, edges = 0, mask_edges = 0;
  double density = 0.0, mask_density = 0.0;
  std::uint64_t sparse_flops = 0, dense_flops = 0;
  double sparse_ms = 0.0, dense_ms = 0.0;
  double max_abs_diff = 0.0;
};

std::vector<BenchRow> bench_rows(const RunConfig& config);

Report run_gen_data(const RunConfig& config);
Report run_train(const RunConfig& config, const std::string& resume_path = "");
Report run_eval(const RunConfig& config, const std::string& checkpoint_path = "");
Report run_gradcheck(const RunConfig& config);
Report run_bench(const RunConfig& config);
Report run_experiment(const RunConfig& config);
/// NDJSON graph of item `dump_item` at threshold_eval; params from a checkpoint when given.
Report run_dump_graph(const RunConfig& config, std::ostream& out, const std::string& checkpoint_path = "");
/// NDJSON attention probabilities of item `dump_item`, one line per (head, row).
Report run_dump_attention(const RunConfig& config, std::ostream& out, const std::string& checkpoint_path = "");

}  // namespace stgt
