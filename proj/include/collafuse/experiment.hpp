#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "collafuse/datasets.hpp"
#include "collafuse/nodes.hpp"

namespace collafuse {

// Declarative description of one sweep: dataset, nodes, schedule, cut points,
// seeds and evaluation settings. Loadable from JSON with CLI overrides.
struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "sprites";  // sprites | gauss2d
  Index dataset_n = 2500;
  int grid = 8;
  int shapes = 2;
  int colors = 5;
  std::vector<std::array<Scalar, 2>> means = {{-1.0, -1.0}, {1.0, 1.0}};
  Scalar var = 0.25;

  int clients = 5;
  int T = 100;
  Scalar beta_start = 1e-3;
  Scalar beta_end = 0.2;
  std::vector<int> cuts = {0, 10, 20, 30, 40, 60, 80, 100};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

  int rounds = 8;
  int steps_per_round = 30;
  Index batch_size = 8;
  Scalar learning_rate = 1e-3;
  std::vector<Scalar> omega;  // per-timestep guidance, empty = 1

  std::string arch = "mlp";  // mlp | smallconv
  int time_embed_dim = 32;

  bool literal_renoise = false;
  bool no_remap = false;

  std::string partition_mode = "by_attribute";  // iid | by_attribute
  Scalar skew = 0.8;
  int partition_attr = 1;

  Index gen_per_client = 24;
  Index heldout_per_client = 64;
  Scalar probe_split = 0.7;

  int parallel_cells = 1;
  std::string out_dir = "runs/sweep";

  static ExperimentConfig from_json_text(const std::string& text);  // throws ConfigError
  std::string to_json_text() const;                                 // canonical (sorted keys)
  std::string hash() const;                                         // hex of canonical dump
  void validate() const;                                            // throws ConfigError
};

// Everything measured for one (cut, seed) cell.
struct RunResult {
  int schema_version = 1;
  std::string config_hash;
  int cut = 0;
  uint64_t seed = 0;

  std::vector<Scalar> fd_client;  // one per client: FD(outputs, own held-out data)
  Scalar fd_client_mean = 0.0;
  Scalar fd_server = 0.0;  // FD(server intermediates, pooled held-out data)

  std::vector<Scalar> probe_f1;  // per attribute
  Scalar probe_f1_mean = 0.0;

  std::vector<std::array<Scalar, 3>> inversion_pairs;  // attacker, victim, cross FD
  std::vector<Scalar> inversion_self;                  // per attacker
  Scalar inversion_cross_mean = 0.0;
  Scalar inversion_self_mean = 0.0;

  std::vector<Scalar> loss_client;  // per round means
  std::vector<Scalar> loss_server;

  uint64_t bytes_up = 0, bytes_down = 0, messages = 0;
  uint64_t client_steps = 0, server_steps = 0;  // inference denoise counters
  uint64_t client_train_steps = 0, server_train_steps = 0;

  uint64_t audit_messages = 0, audit_uploads = 0;
  uint64_t audit_raw_data_hits = 0, audit_param_hits = 0, audit_timestep_leaks = 0;

  std::string to_json_text() const;
  static RunResult from_json_text(const std::string& text);
};

std::string cell_result_path(const ExperimentConfig& cfg, int cut, uint64_t seed);
std::string cell_checkpoint_path(const ExperimentConfig& cfg, int cut, uint64_t seed,
                                 const std::string& role);

// Builds, trains and scores one cell. Deterministic in (cfg, cut, seed).
RunResult run_cell(const ExperimentConfig& cfg, int cut, uint64_t seed,
                   bool save_checkpoints = true);

struct SweepOutcome {
  std::vector<RunResult> results;  // ordered by (cut, seed)
  int cells_run = 0;
  int cells_skipped = 0;  // resumed from existing results
};

// Runs every (cut, seed) cell, skipping cells whose result file already exists
// with a matching config hash (ResumeMismatch otherwise), then writes
// sweep.csv plus a timings sidecar. Cells may run in parallel; outputs are
// independent of scheduling.
SweepOutcome run_sweep(const ExperimentConfig& cfg);

// Flat CSV across a sweep, one row per (cut, seed).
std::string results_csv(const std::vector<RunResult>& results);

// Reads every cell result under cfg.out_dir (validating schema and config
// hash) and rewrites sweep.csv; returns the results.
std::vector<RunResult> export_results(const ExperimentConfig& cfg);

// Output root override applied to relative out_dir values.
std::string resolve_out_dir(const std::string& out_dir);
constexpr const char* kOutRootEnv = "COLLAFUSE_OUT";

}  // namespace collafuse
