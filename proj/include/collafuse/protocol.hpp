#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "collafuse/tensor.hpp"

namespace collafuse {

// ---- messages -----------------------------------------------------------------

// Client -> server: re-noised samples for one training batch. Tensors travel
// as float32; timesteps stay above the session cut so the server never sees
// anything cleaner than noise level t_zeta.
struct TrainBatchUpload {
  Tensor x_ts;              // [b, ...sample dims]
  Tensor eps_s;             // same shape as x_ts
  std::vector<int> t_s;     // length b
  std::vector<int> labels;  // length b, -1 = unconditional
  int client_id = 0;
  int round = 0;
};

struct InferenceRequest {
  std::vector<int> labels;  // one per requested sample
  int count = 0;
  std::optional<uint64_t> seed;
  int client_id = 0;
};

struct InferenceResponse {
  Tensor x_tz;  // [count, ...sample dims] at noise level t_zeta
  int t_zeta = 0;
  uint64_t seed_used = 0;
};

using Message = std::variant<TrainBatchUpload, InferenceRequest, InferenceResponse>;

enum class MessageTag : uint8_t {
  kTrainBatchUpload = 1,
  kInferenceRequest = 2,
  kInferenceResponse = 3,
};

MessageTag tag_of(const Message& m);

// Frame: "CFMS" | tag u8 | payload_len u32 | digest u32 | payload.
// The digest (FNV-1a over tag+payload) rejects any single-byte tamper.
// Payload fields are little-endian in declaration order; tensors are a u8
// precision tag plus u32 shape header followed by raw values. Training
// uploads carry float32 data, inference intermediates float64 (the client
// continues exact computation from them).
std::vector<uint8_t> encode(const Message& msg);
Message decode(std::span<const uint8_t> bytes);

// encoded size of a message, derivable from the format definition
size_t encoded_size(const Message& msg);

// ---- transports -----------------------------------------------------------------

struct ChannelStats {
  uint64_t bytes_up = 0;    // client -> server
  uint64_t bytes_down = 0;  // server -> client
  uint64_t messages = 0;
};

enum class Direction { kClientToServer, kServerToClient };

using AuditHook = std::function<void(Direction, const Message&, size_t encoded_bytes)>;

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const Message& m) = 0;
  virtual Message recv() = 0;
  virtual bool has_pending() = 0;
};

// In-process loopback: two FIFO queues with byte/latency accounting and an
// optional audit hook observing every delivery.
class SimulatedChannel {
 public:
  struct Latency {
    double per_message_s = 0.0;
    double per_byte_s = 0.0;
  };

  SimulatedChannel();
  ~SimulatedChannel();
  Endpoint& client_end();
  Endpoint& server_end();

  const ChannelStats& stats() const { return stats_; }
  double simulated_latency_s() const { return latency_s_; }
  void set_latency(Latency l) { latency_model_ = l; }
  void set_audit(AuditHook hook) { audit_ = std::move(hook); }
  void close();

 private:
  class End;
  void push(Direction dir, const Message& m);
  Message pop(Direction dir);
  bool pending(Direction dir) const;

  std::deque<std::vector<uint8_t>> to_server_, to_client_;
  ChannelStats stats_;
  Latency latency_model_;
  double latency_s_ = 0.0;
  AuditHook audit_;
  bool closed_ = false;
  std::unique_ptr<End> client_, server_;
};

// Reliable ordered byte stream; the unit the framed transport runs over.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write(std::span<const uint8_t> data) = 0;
  virtual void read_exact(uint8_t* dst, size_t n) = 0;  // throws ChannelClosed
};

// In-process duplex pipe: what one end writes the other reads, in order.
struct DuplexPipe {
  DuplexPipe();
  std::unique_ptr<ByteStream> a;  // reads what b wrote
  std::unique_ptr<ByteStream> b;
};

// TCP byte stream over one connected socket.
class TcpByteStream : public ByteStream {
 public:
  static std::unique_ptr<TcpByteStream> connect(const std::string& host, int port);
  explicit TcpByteStream(int fd) : fd_(fd) {}
  ~TcpByteStream() override;
  void write(std::span<const uint8_t> data) override;
  void read_exact(uint8_t* dst, size_t n) override;

 private:
  int fd_ = -1;
};

// One-connection listener; accept() yields the server-side stream.
class TcpListener {
 public:
  explicit TcpListener(int port);  // port 0 = ephemeral
  ~TcpListener();
  int port() const { return port_; }
  std::unique_ptr<TcpByteStream> accept_one();

 private:
  int fd_ = -1;
  int port_ = 0;
};

// u32 length prefix + encoded message over any reliable byte stream.
class StreamTransport : public Endpoint {
 public:
  StreamTransport(ByteStream& stream, Direction send_direction, ChannelStats* stats = nullptr,
                  AuditHook audit = nullptr);
  void send(const Message& m) override;
  Message recv() override;
  bool has_pending() override { return false; }  // blocking stream, no peek

 private:
  ByteStream& stream_;
  Direction send_dir_;
  ChannelStats* stats_;
  AuditHook audit_;
};

}  // namespace collafuse
