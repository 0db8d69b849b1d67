#include "collafuse/nodes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "collafuse/binio.hpp"

namespace collafuse {

namespace {

bool same_schedule(const Schedule& a, const Schedule& b) {
  return a.T() == b.T() && (a.beta_array() == b.beta_array()).all();
}

std::vector<int> normalized_labels(const std::vector<int>& labels, Index b) {
  if (labels.empty()) return std::vector<int>(static_cast<size_t>(b), -1);
  return labels;
}

// one optimizer update of `model` towards eps_target with per-sample guidance
Scalar denoise_update(DenoiserModel& model, AdamState& opt, NodeCounters& counters,
                      const Tensor& x_t, std::span<const int> t, const std::vector<int>& labels,
                      const Tensor& eps_target, const GuidanceTable& guidance, int T) {
  auto params = model.param_ptrs();
  Tape tape;
  Tensor pred = model.predict(x_t, t, labels, T);
  Tensor loss;
  if (guidance.trivial()) {
    loss = mse_loss(pred, eps_target);
  } else {
    const Index b = x_t.shape()[0];
    const Index d = x_t.size() / b;
    Tensor err2 = square(sub(reshape(pred, {b, d}), eps_target.reshaped({b, d})));
    Tensor per_sample = matmul(err2, Tensor::full({d, 1}, 1.0 / static_cast<Scalar>(d)));
    ArrayX w(b);
    for (Index i = 0; i < b; ++i)
      w[i] = guidance.at(t[static_cast<size_t>(i)]) / static_cast<Scalar>(b);
    loss = matmul(Tensor({1, b}, std::move(w)), per_sample);
  }
  backward(loss);
  optimizer_step(params, opt);
  counters.train_steps += 1;
  return loss.value();
}

// shared denoising loop: chain positions t_hi down to t_lo; coefficients and
// model conditioning read at the (optionally remapped) timestep
Tensor denoise_range(const DenoiserModel& m, const Schedule& s, Tensor x, int t_hi, int t_lo,
                     const std::vector<int>& labels, Rng& gen, const RemapTable* remap,
                     NodeCounters* counters) {
  const std::vector<int> wire_labels = normalized_labels(labels, x.shape()[0]);
  for (int t = t_hi; t >= t_lo; --t) {
    const int tc = remap ? remap->at(t) : t;
    std::vector<int> ts(static_cast<size_t>(x.shape()[0]), tc);
    Tensor eps_hat = m.predict(x, ts, wire_labels, s.T());
    if (t > 1) {
      Tensor z(x.shape(), gen.normal_array(x.size()));
      x = reverse_step(x, tc, eps_hat, &z, s);
    } else {
      x = reverse_step(x, tc, eps_hat, nullptr, s);
    }
    if (counters) counters->denoise_steps += 1;
  }
  return x;
}

}  // namespace

bool GuidanceTable::trivial() const {
  for (Scalar w : omega)
    if (w != 1.0) return false;
  return true;
}

ServerNode::ServerNode(DenoiserModel m, Schedule s, int cut_point, Scalar lr, uint64_t seed)
    : model(std::move(m)), schedule(std::move(s)), cut(make_cut(cut_point, schedule.T()).t_zeta),
      rng(seed) {
  optimizer.learning_rate = lr;
}

ClientNode::ClientNode(int node_id, DenoiserModel m, Schedule s, int cut_point, Scalar lr,
                       uint64_t seed, Dataset shard)
    : id(node_id), model(std::move(m)), schedule(std::move(s)),
      cut(make_cut(cut_point, schedule.T()).t_zeta), remap(compute_remap(schedule.T(), cut)),
      rng(seed), data(std::move(shard)) {
  optimizer.learning_rate = lr;
}

ClientStepResult client_train_step(ClientNode& c, const Tensor& x0, const std::vector<int>& labels,
                                   int round, const TrainFlags& flags) {
  if (x0.ndim() < 2 || x0.shape()[0] < 1) throw EmptyBatch("client_train_step: empty batch");
  const int T = c.schedule.T();
  if (c.cut < 1 || c.cut > T - 1)
    throw DegenerateCut("client_train_step: cut " + std::to_string(c.cut) +
                        " belongs to a baseline path");
  const Index b = x0.shape()[0];
  const std::vector<int> y = normalized_labels(labels, b);
  if (static_cast<Index>(y.size()) != b)
    throw ShapeMismatch("client_train_step: one label per sample");

  std::vector<int> t_c(static_cast<size_t>(b)), t_s(static_cast<size_t>(b));
  for (auto& t : t_c) t = static_cast<int>(c.rng.uniform_int(1, c.cut));
  for (auto& t : t_s) t = static_cast<int>(c.rng.uniform_int(c.cut + 1, T));
  Tensor eps_c(x0.shape(), c.rng.normal_array(x0.size()));
  Tensor eps_s(x0.shape(), c.rng.normal_array(x0.size()));

  Tensor x_tc = forward_diffuse_rows(x0, t_c, eps_c, c.schedule);
  Tensor x_tz = forward_diffuse(x0, c.cut, eps_c, c.schedule);
  Tensor x_ts = conditional_diffuse_rows(x_tz, c.cut, t_s, eps_s, c.schedule, flags.literal_renoise);

  ClientStepResult out;
  out.loss = denoise_update(c.model, c.optimizer, c.counters, x_tc, t_c, y, eps_c, c.guidance, T);
  out.upload = TrainBatchUpload{std::move(x_ts), std::move(eps_s), std::move(t_s), y, c.id, round};
  return out;
}

Scalar server_train_step(ServerNode& s, const TrainBatchUpload& upload) {
  const int T = s.schedule.T();
  for (int t : upload.t_s) {
    if (t <= s.cut)
      throw TimestepLeak("upload timestep " + std::to_string(t) + " at or below cut " +
                         std::to_string(s.cut));
    if (t > T) throw TimestepOutOfRange("upload timestep " + std::to_string(t));
  }
  return denoise_update(s.model, s.optimizer, s.counters, upload.x_ts, upload.t_s, upload.labels,
                        upload.eps_s, s.guidance, T);
}

TrainBatchUpload client_upload_only_step(ClientNode& c, const Tensor& x0,
                                         const std::vector<int>& labels, int round) {
  if (x0.ndim() < 2 || x0.shape()[0] < 1) throw EmptyBatch("client_upload_only_step: empty batch");
  const int T = c.schedule.T();
  const Index b = x0.shape()[0];
  std::vector<int> t_s(static_cast<size_t>(b));
  for (auto& t : t_s) t = static_cast<int>(c.rng.uniform_int(1, T));
  Tensor eps_s(x0.shape(), c.rng.normal_array(x0.size()));
  Tensor x_ts = forward_diffuse_rows(x0, t_s, eps_s, c.schedule);
  return TrainBatchUpload{std::move(x_ts), std::move(eps_s), std::move(t_s),
                          normalized_labels(labels, b), c.id, round};
}

Scalar client_local_step(ClientNode& c, const Tensor& x0, const std::vector<int>& labels) {
  if (x0.ndim() < 2 || x0.shape()[0] < 1) throw EmptyBatch("client_local_step: empty batch");
  const int T = c.schedule.T();
  const Index b = x0.shape()[0];
  std::vector<int> t_c(static_cast<size_t>(b));
  for (auto& t : t_c) t = static_cast<int>(c.rng.uniform_int(1, T));
  Tensor eps_c(x0.shape(), c.rng.normal_array(x0.size()));
  Tensor x_tc = forward_diffuse_rows(x0, t_c, eps_c, c.schedule);
  return denoise_update(c.model, c.optimizer, c.counters, x_tc, t_c,
                        normalized_labels(labels, b), eps_c, c.guidance, T);
}

std::vector<TrainRound> train_collaborative(std::vector<ClientNode>& clients, ServerNode& server,
                                            SimulatedChannel& channel, const TrainConfig& cfg) {
  if (clients.empty()) throw ConfigMismatch("no clients");
  for (const ClientNode& c : clients) {
    if (!same_schedule(c.schedule, server.schedule))
      throw ConfigMismatch("client " + std::to_string(c.id) + " schedule differs from server");
    if (c.cut != server.cut)
      throw ConfigMismatch("client " + std::to_string(c.id) + " cut differs from server");
  }

  std::vector<ClientNode*> order;
  for (ClientNode& c : clients) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  const int T = server.schedule.T();
  const int cut = server.cut;

  std::vector<TrainRound> rounds;
  Scalar prev_monitor = std::numeric_limits<Scalar>::infinity();
  for (int round = 0; round < cfg.rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    Scalar client_sum = 0.0, server_sum = 0.0;
    int client_n = 0, server_n = 0;

    for (ClientNode* c : order) {
      const Index n = c->data.size();
      if (n < 1) throw EmptyBatch("client " + std::to_string(c->id) + " has no data");
      for (int step = 0; step < cfg.steps_per_round; ++step) {
        std::vector<Index> idx(static_cast<size_t>(cfg.batch_size));
        for (auto& i : idx) i = static_cast<Index>(c->rng.uniform_int(0, n - 1));
        Tensor x0 = c->data.rows(idx);
        std::vector<int> labels;
        labels.reserve(idx.size());
        for (Index i : idx) labels.push_back(c->data.label_of(i));

        if (cut == 0) {
          TrainBatchUpload up = client_upload_only_step(*c, x0, labels, round);
          channel.client_end().send(Message{std::move(up)});
          auto msg = channel.server_end().recv();
          server_sum += server_train_step(server, std::get<TrainBatchUpload>(msg));
          server_n += 1;
        } else if (cut == T) {
          client_sum += client_local_step(*c, x0, labels);
          client_n += 1;
        } else {
          ClientStepResult res = client_train_step(*c, x0, labels, round, cfg.flags);
          client_sum += res.loss;
          client_n += 1;
          channel.client_end().send(Message{std::move(res.upload)});
          auto msg = channel.server_end().recv();
          server_sum += server_train_step(server, std::get<TrainBatchUpload>(msg));
          server_n += 1;
        }
      }
    }

    TrainRound r;
    r.round = round;
    r.client_loss_mean = client_n ? client_sum / client_n : 0.0;
    r.server_loss_mean = server_n ? server_sum / server_n : 0.0;
    r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rounds.push_back(r);

    if (cfg.early_stop) {
      const Scalar monitor = r.client_loss_mean + r.server_loss_mean;
      if (std::isfinite(prev_monitor) &&
          std::abs(prev_monitor - monitor) < cfg.early_stop_rel * std::max(prev_monitor, 1e-12))
        break;
      prev_monitor = monitor;
    }
  }
  return rounds;
}

// ---- inference -------------------------------------------------------------------

Tensor sample_chain(const DenoiserModel& m, const Schedule& s, const std::vector<int>& labels,
                    Index count, Rng& gen, NodeCounters* counters) {
  Shape shape = m.in_shape();
  shape.insert(shape.begin(), count);
  Tensor x(shape, gen.normal_array(numel(shape)));
  return denoise_range(m, s, std::move(x), s.T(), 1, labels, gen, nullptr, counters);
}

InferenceResponse server_infer_intermediate(ServerNode& srv, const InferenceRequest& req) {
  if (req.count < 1) throw EmptyBatch("inference request without samples");
  if (static_cast<int>(req.labels.size()) != req.count)
    throw ConfigMismatch("inference request needs one label per sample");
  const uint64_t seed_used = req.seed.has_value() ? *req.seed : srv.rng.next_u64();
  Rng gen(seed_used);
  Shape shape = srv.model.in_shape();
  shape.insert(shape.begin(), req.count);
  Tensor x(shape, gen.normal_array(numel(shape)));
  x = denoise_range(srv.model, srv.schedule, std::move(x), srv.schedule.T(), srv.cut + 1,
                    req.labels, gen, nullptr, &srv.counters);
  return InferenceResponse{std::move(x), srv.cut, seed_used};
}

Tensor client_finish(ClientNode& c, const InferenceResponse& resp, const std::vector<int>& labels,
                     const InferFlags& flags) {
  if (resp.t_zeta != c.cut)
    throw ConfigMismatch("response cut " + std::to_string(resp.t_zeta) + " != client cut " +
                         std::to_string(c.cut));
  if (c.cut == 0) return resp.x_tz;

  Tensor x = resp.x_tz;
  if (flags.shared_rng) {
    // resume the exact noise stream the server used: skip its draws
    Rng gen(resp.seed_used);
    const uint64_t per = static_cast<uint64_t>(x.size());
    const uint64_t server_noise_steps =
        static_cast<uint64_t>(c.schedule.T() - c.cut);  // every server step has t > 1 here
    gen.discard(2 * per * (1 + server_noise_steps));
    return denoise_range(c.model, c.schedule, std::move(x), c.cut, 1, labels, gen,
                         flags.no_remap ? nullptr : &c.remap, &c.counters);
  }
  return denoise_range(c.model, c.schedule, std::move(x), c.cut, 1, labels, c.rng,
                       flags.no_remap ? nullptr : &c.remap, &c.counters);
}

Tensor infer_collaborative(ServerNode& srv, ClientNode& c, SimulatedChannel& channel,
                           const std::vector<int>& labels, Index count,
                           std::optional<uint64_t> seed, const InferFlags& flags,
                           Tensor* intermediate_out) {
  if (!same_schedule(srv.schedule, c.schedule) || srv.cut != c.cut)
    throw ConfigMismatch("server and client disagree on schedule or cut");
  const int T = srv.schedule.T();

  if (c.cut == T) {
    // independent client model: the whole chain runs locally, nothing is sent
    Rng local(seed.has_value() ? *seed : c.rng.next_u64());
    Shape shape = c.model.in_shape();
    shape.insert(shape.begin(), count);
    Tensor x(shape, local.normal_array(numel(shape)));
    if (intermediate_out) *intermediate_out = x;
    return denoise_range(c.model, c.schedule, std::move(x), T, 1, labels, local, nullptr,
                         &c.counters);
  }

  InferenceRequest req{labels, static_cast<int>(count), seed, c.id};
  channel.client_end().send(Message{req});
  auto req_msg = std::get<InferenceRequest>(channel.server_end().recv());
  InferenceResponse resp = server_infer_intermediate(srv, req_msg);
  channel.server_end().send(Message{resp});
  auto resp_msg = std::get<InferenceResponse>(channel.client_end().recv());
  if (intermediate_out) *intermediate_out = resp_msg.x_tz;
  return client_finish(c, resp_msg, labels, flags);
}

// ---- privacy audit -----------------------------------------------------------------

namespace {

uint64_t hash_f32(const ArrayX& v) {
  ByteWriter w;
  for (Index i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v[i]));
  return fnv1a64(std::span<const uint8_t>(w.buffer().data(), w.buffer().size()));
}

uint64_t hash_f64(const ArrayX& v) {
  ByteWriter w;
  for (Index i = 0; i < v.size(); ++i) w.f64(v[i]);
  return fnv1a64(std::span<const uint8_t>(w.buffer().data(), w.buffer().size()));
}

}  // namespace

void PrivacyAuditor::forbid_rows(const Dataset& ds) {
  for (Index i = 0; i < ds.size(); ++i) {
    ArrayX row = ds.row(i);
    forbidden_.push_back(hash_f32(row));
    forbidden_.push_back(hash_f64(row));
  }
  sorted_ = false;
}

void PrivacyAuditor::forbid_params(const DenoiserModel& m) {
  for (const auto& p : m.params()) {
    forbidden_.push_back(hash_f32(p.tensor.data()));
    forbidden_.push_back(hash_f64(p.tensor.data()));
  }
  sorted_ = false;
}

void PrivacyAuditor::scan_tensor(const Tensor& t) {
  auto hit = [&](uint64_t h) {
    return std::binary_search(forbidden_.begin(), forbidden_.end(), h);
  };
  if (t.ndim() >= 1 && t.shape()[0] > 0) {
    const Index rows = t.shape()[0];
    const Index per = t.size() / rows;
    for (Index r = 0; r < rows; ++r) {
      ArrayX row = t.data().segment(r * per, per);
      if (hit(hash_f32(row)) || hit(hash_f64(row))) report_.raw_data_hits += 1;
    }
  }
  if (hit(hash_f32(t.data())) || hit(hash_f64(t.data()))) report_.param_hits += 1;
}

AuditHook PrivacyAuditor::hook(int cut) {
  if (!sorted_) {
    std::sort(forbidden_.begin(), forbidden_.end());
    sorted_ = true;
  }
  return [this, cut](Direction dir, const Message& m, size_t) {
    report_.messages += 1;
    if (const auto* up = std::get_if<TrainBatchUpload>(&m)) {
      report_.uploads += 1;
      for (int t : up->t_s)
        if (t <= cut) report_.timestep_leaks += 1;
      scan_tensor(up->x_ts);
      scan_tensor(up->eps_s);
    } else if (const auto* resp = std::get_if<InferenceResponse>(&m)) {
      scan_tensor(resp->x_tz);
    }
    (void)dir;
  };
}

}  // namespace collafuse
