#pragma once

#include <optional>
#include <vector>

#include "collafuse/datasets.hpp"
#include "collafuse/denoiser.hpp"
#include "collafuse/diffusion.hpp"
#include "collafuse/optim.hpp"
#include "collafuse/protocol.hpp"

namespace collafuse {

struct NodeCounters {
  uint64_t train_steps = 0;    // optimizer updates applied
  uint64_t denoise_steps = 0;  // reverse steps executed (per batched chain)
};

// Per-timestep guidance weights; empty means omega_t == 1 everywhere.
struct GuidanceTable {
  std::vector<Scalar> omega;
  Scalar at(int t) const {
    return omega.empty() ? 1.0 : omega[static_cast<size_t>(t) - 1];
  }
  bool trivial() const;
};

struct ServerNode {
  DenoiserModel model;
  Schedule schedule;
  int cut = 0;
  AdamState optimizer;
  Rng rng;
  GuidanceTable guidance;
  NodeCounters counters;

  ServerNode(DenoiserModel m, Schedule s, int cut_point, Scalar lr, uint64_t seed);
};

struct ClientNode {
  int id = 0;
  DenoiserModel model;
  Schedule schedule;
  int cut = 0;
  RemapTable remap;
  AdamState optimizer;
  Rng rng;
  GuidanceTable guidance;
  NodeCounters counters;
  Dataset data;  // private shard; never serialized onto a transport

  ClientNode(int node_id, DenoiserModel m, Schedule s, int cut_point, Scalar lr, uint64_t seed,
             Dataset shard);
};

struct TrainFlags {
  bool literal_renoise = false;
};

struct ClientStepResult {
  Scalar loss = 0.0;
  TrainBatchUpload upload;
};

// One client-side step of the collaborative loop: local denoising loss on
// t^c ~ U[1, cut], plus the re-noised x_{t^s}, t^s ~ U[cut+1, T] handed to the
// server. Requires 1 <= cut <= T-1; degenerate cuts train via the baseline
// paths in train_collaborative.
ClientStepResult client_train_step(ClientNode& c, const Tensor& x0, const std::vector<int>& labels,
                                   int round, const TrainFlags& flags = {});

// Server-side half: one optimizer step on the uploaded pairs. Rejects any
// timestep at or below the cut (TimestepLeak).
Scalar server_train_step(ServerNode& s, const TrainBatchUpload& upload);

// baseline steps used by the degenerate cuts
TrainBatchUpload client_upload_only_step(ClientNode& c, const Tensor& x0,
                                         const std::vector<int>& labels, int round);
Scalar client_local_step(ClientNode& c, const Tensor& x0, const std::vector<int>& labels);

struct TrainRound {
  int round = 0;
  Scalar client_loss_mean = 0.0;  // NaN-free; 0 when no client losses exist
  Scalar server_loss_mean = 0.0;
  double wall_s = 0.0;
};

struct TrainConfig {
  int rounds = 1;
  int steps_per_round = 1;  // batches per client per round
  Index batch_size = 8;
  TrainFlags flags;
  bool early_stop = false;
  Scalar early_stop_rel = 1e-3;
};

// Alg.-1 orchestration: clients visited in ascending id order, uploads applied
// by the server strictly in arrival order. Deterministic under fixed seeds.
std::vector<TrainRound> train_collaborative(std::vector<ClientNode>& clients, ServerNode& server,
                                            SimulatedChannel& channel, const TrainConfig& cfg);

struct InferFlags {
  bool no_remap = false;
  bool shared_rng = false;  // client resumes the server's noise stream
};

// Full-chain reference sampler with a single model (the monolithic path the
// split inference must reproduce under no_remap + shared_rng).
Tensor sample_chain(const DenoiserModel& m, const Schedule& s, const std::vector<int>& labels,
                    Index count, Rng& gen, NodeCounters* counters = nullptr);

// Alg.-2 server half: sample x_T, denoise down to the cut, answer with the
// still-noisy batch.
InferenceResponse server_infer_intermediate(ServerNode& srv, const InferenceRequest& req);

// Alg.-2 client half: finish an intermediate with the client model using the
// remapped schedule (or the raw timesteps under no_remap).
Tensor client_finish(ClientNode& c, const InferenceResponse& resp, const std::vector<int>& labels,
                     const InferFlags& flags = {});

// End-to-end collaborative inference over a channel. cut == 0 returns the
// server output as-is; cut == T runs entirely on the client with no traffic.
// `intermediate_out`, when set, receives the state handed to the client: the
// server output after its T - cut steps (the untouched x_T when cut == T).
Tensor infer_collaborative(ServerNode& srv, ClientNode& c, SimulatedChannel& channel,
                           const std::vector<int>& labels, Index count,
                           std::optional<uint64_t> seed, const InferFlags& flags = {},
                           Tensor* intermediate_out = nullptr);

// Privacy audit over a transport: hashes of raw training rows and client
// parameters must never appear in any message, and uploaded timesteps must
// stay above the cut.
class PrivacyAuditor {
 public:
  void forbid_rows(const Dataset& ds);
  void forbid_params(const DenoiserModel& m);

  AuditHook hook(int cut);

  struct Report {
    uint64_t messages = 0;
    uint64_t uploads = 0;
    uint64_t raw_data_hits = 0;
    uint64_t param_hits = 0;
    uint64_t timestep_leaks = 0;
    bool clean() const { return raw_data_hits == 0 && param_hits == 0 && timestep_leaks == 0; }
  };
  const Report& report() const { return report_; }

 private:
  void scan_tensor(const Tensor& t);
  std::vector<uint64_t> forbidden_;  // sorted hashes
  bool sorted_ = false;
  Report report_;
};

}  // namespace collafuse
