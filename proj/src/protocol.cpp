#include "collafuse/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "collafuse/binio.hpp"

namespace collafuse {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'M', 'S'};
constexpr size_t kHeaderSize = 4 + 1 + 4 + 4;

// Training tensors ride as float32 (noisy targets tolerate the downcast and it
// halves upload traffic); inference intermediates ride as float64 because the
// client resumes exact computation from them.
void write_tensor(ByteWriter& w, const Tensor& t, bool full_precision) {
  w.u8(full_precision ? 8 : 4);
  w.u32(static_cast<uint32_t>(t.ndim()));
  for (Index e : t.shape()) w.u32(static_cast<uint32_t>(e));
  if (full_precision) {
    for (Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  } else {
    for (Index i = 0; i < t.size(); ++i) w.f32(static_cast<float>(t.data()[i]));
  }
}

Tensor read_tensor(ByteReader& r) {
  const uint8_t width = r.u8();
  if (width != 4 && width != 8) throw InvariantViolation("bad tensor precision tag");
  const uint32_t nd = r.u32();
  if (nd > 8) throw InvariantViolation("tensor rank " + std::to_string(nd) + " out of range");
  Shape shape(nd);
  for (uint32_t i = 0; i < nd; ++i) {
    shape[i] = static_cast<Index>(r.u32());
    if (shape[i] < 0 || shape[i] > (1 << 24)) throw InvariantViolation("tensor extent out of range");
  }
  const Index n = numel(shape);
  if (n > (1 << 26)) throw InvariantViolation("tensor too large");
  ArrayX data(n);
  if (width == 8) {
    for (Index i = 0; i < n; ++i) data[i] = r.f64();
  } else {
    for (Index i = 0; i < n; ++i) data[i] = static_cast<Scalar>(r.f32());
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_ints(ByteWriter& w, const std::vector<int>& v) {
  w.u32(static_cast<uint32_t>(v.size()));
  for (int x : v) w.u32(static_cast<uint32_t>(x));  // -1 rides as 0xFFFFFFFF
}

std::vector<int> read_ints(ByteReader& r) {
  const uint32_t n = r.u32();
  if (n > (1u << 24)) throw InvariantViolation("array length out of range");
  std::vector<int> v(n);
  for (uint32_t i = 0; i < n; ++i) v[i] = static_cast<int>(r.u32());
  return v;
}

void check_invariants(const TrainBatchUpload& m) {
  if (m.x_ts.ndim() < 1 || !same_shape(m.x_ts.shape(), m.eps_s.shape()))
    throw InvariantViolation("upload tensors must share a batched shape");
  const Index b = m.x_ts.shape()[0];
  if (static_cast<Index>(m.t_s.size()) != b || static_cast<Index>(m.labels.size()) != b)
    throw InvariantViolation("upload batch dimensions disagree");
  for (int t : m.t_s)
    if (t < 1) throw InvariantViolation("upload timestep below 1");
  if (m.client_id < 0 || m.round < 0) throw InvariantViolation("negative id fields");
}

void check_invariants(const InferenceRequest& m) {
  if (m.count < 1) throw InvariantViolation("request count must be positive");
  if (static_cast<int>(m.labels.size()) != m.count)
    throw InvariantViolation("request needs one label per sample");
  if (m.client_id < 0) throw InvariantViolation("negative client id");
}

void check_invariants(const InferenceResponse& m) {
  if (m.t_zeta < 0) throw InvariantViolation("negative cut point");
  if (m.x_tz.ndim() < 1) throw InvariantViolation("response tensor must be batched");
}

std::vector<uint8_t> encode_payload(const Message& msg) {
  ByteWriter w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        check_invariants(m);
        if constexpr (std::is_same_v<T, TrainBatchUpload>) {
          write_tensor(w, m.x_ts, /*full_precision=*/false);
          write_tensor(w, m.eps_s, /*full_precision=*/false);
          write_ints(w, m.t_s);
          write_ints(w, m.labels);
          w.u32(static_cast<uint32_t>(m.client_id));
          w.u32(static_cast<uint32_t>(m.round));
        } else if constexpr (std::is_same_v<T, InferenceRequest>) {
          write_ints(w, m.labels);
          w.u32(static_cast<uint32_t>(m.count));
          w.u8(m.seed.has_value() ? 1 : 0);
          if (m.seed.has_value()) w.u64(*m.seed);
          w.u32(static_cast<uint32_t>(m.client_id));
        } else {
          write_tensor(w, m.x_tz, /*full_precision=*/true);
          w.u32(static_cast<uint32_t>(m.t_zeta));
          w.u64(m.seed_used);
        }
      },
      msg);
  return w.take();
}

uint32_t frame_digest(uint8_t tag, std::span<const uint8_t> payload) {
  uint32_t h = 2166136261u;
  h ^= tag;
  h *= 16777619u;
  for (uint8_t b : payload) {
    h ^= b;
    h *= 16777619u;
  }
  return h;
}

}  // namespace

MessageTag tag_of(const Message& m) {
  return static_cast<MessageTag>(static_cast<uint8_t>(m.index()) + 1);
}

std::vector<uint8_t> encode(const Message& msg) {
  std::vector<uint8_t> payload = encode_payload(msg);
  const uint8_t tag = static_cast<uint8_t>(tag_of(msg));
  ByteWriter w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.u8(tag);
  w.u32(static_cast<uint32_t>(payload.size()));
  w.u32(frame_digest(tag, payload));
  w.bytes(payload);
  return w.take();
}

size_t encoded_size(const Message& msg) { return kHeaderSize + encode_payload(msg).size(); }

Message decode(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw Truncated("message shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagic("bad message magic");
  ByteReader header(bytes.subspan(4));
  const uint8_t tag = header.u8();
  const uint32_t payload_len = header.u32();
  const uint32_t digest = header.u32();
  if (bytes.size() < kHeaderSize + payload_len) throw Truncated("payload shorter than declared");
  if (bytes.size() > kHeaderSize + payload_len)
    throw InvariantViolation("trailing bytes after payload");
  std::span<const uint8_t> payload = bytes.subspan(kHeaderSize, payload_len);
  if (frame_digest(tag, payload) != digest)
    throw InvariantViolation("frame digest mismatch (corrupted payload)");

  ByteReader r(payload);
  Message out;
  switch (static_cast<MessageTag>(tag)) {
    case MessageTag::kTrainBatchUpload: {
      TrainBatchUpload m;
      m.x_ts = read_tensor(r);
      m.eps_s = read_tensor(r);
      m.t_s = read_ints(r);
      m.labels = read_ints(r);
      m.client_id = static_cast<int>(r.u32());
      m.round = static_cast<int>(r.u32());
      check_invariants(m);
      out = std::move(m);
      break;
    }
    case MessageTag::kInferenceRequest: {
      InferenceRequest m;
      m.labels = read_ints(r);
      m.count = static_cast<int>(r.u32());
      if (r.u8() != 0) m.seed = r.u64();
      m.client_id = static_cast<int>(r.u32());
      check_invariants(m);
      out = std::move(m);
      break;
    }
    case MessageTag::kInferenceResponse: {
      InferenceResponse m;
      m.x_tz = read_tensor(r);
      m.t_zeta = static_cast<int>(r.u32());
      m.seed_used = r.u64();
      check_invariants(m);
      out = std::move(m);
      break;
    }
    default:
      throw BadTag("unknown message tag " + std::to_string(tag));
  }
  if (!r.done()) throw InvariantViolation("payload has unread bytes");
  return out;
}

// ---- simulated channel ------------------------------------------------------------

class SimulatedChannel::End : public Endpoint {
 public:
  End(SimulatedChannel& ch, Direction send_dir) : ch_(ch), send_dir_(send_dir) {}
  void send(const Message& m) override { ch_.push(send_dir_, m); }
  Message recv() override {
    return ch_.pop(send_dir_ == Direction::kClientToServer ? Direction::kServerToClient
                                                           : Direction::kClientToServer);
  }
  bool has_pending() override {
    return ch_.pending(send_dir_ == Direction::kClientToServer ? Direction::kServerToClient
                                                               : Direction::kClientToServer);
  }

 private:
  SimulatedChannel& ch_;
  Direction send_dir_;
};

SimulatedChannel::SimulatedChannel()
    : client_(std::make_unique<End>(*this, Direction::kClientToServer)),
      server_(std::make_unique<End>(*this, Direction::kServerToClient)) {}

SimulatedChannel::~SimulatedChannel() = default;

Endpoint& SimulatedChannel::client_end() { return *client_; }
Endpoint& SimulatedChannel::server_end() { return *server_; }

void SimulatedChannel::close() { closed_ = true; }

void SimulatedChannel::push(Direction dir, const Message& m) {
  if (closed_) throw ChannelClosed("send on closed channel");
  std::vector<uint8_t> bytes = encode(m);
  stats_.messages += 1;
  latency_s_ += latency_model_.per_message_s +
                latency_model_.per_byte_s * static_cast<double>(bytes.size());
  if (dir == Direction::kClientToServer) {
    stats_.bytes_up += bytes.size();
  } else {
    stats_.bytes_down += bytes.size();
  }
  if (audit_) audit_(dir, m, bytes.size());
  (dir == Direction::kClientToServer ? to_server_ : to_client_).push_back(std::move(bytes));
}

Message SimulatedChannel::pop(Direction dir) {
  auto& q = dir == Direction::kClientToServer ? to_server_ : to_client_;
  if (q.empty()) {
    if (closed_) throw ChannelClosed("recv on closed channel");
    throw ChannelClosed("recv with no pending message");
  }
  std::vector<uint8_t> bytes = std::move(q.front());
  q.pop_front();
  return decode(bytes);
}

bool SimulatedChannel::pending(Direction dir) const {
  return !(dir == Direction::kClientToServer ? to_server_ : to_client_).empty();
}

// ---- byte streams ------------------------------------------------------------------

namespace {

struct PipeBuffer {
  std::deque<uint8_t> data;
  bool closed = false;
};

class PipeEnd : public ByteStream {
 public:
  PipeEnd(std::shared_ptr<PipeBuffer> read_from, std::shared_ptr<PipeBuffer> write_to)
      : in_(std::move(read_from)), out_(std::move(write_to)) {}

  void write(std::span<const uint8_t> data) override {
    if (out_->closed) throw ChannelClosed("write on closed pipe");
    out_->data.insert(out_->data.end(), data.begin(), data.end());
  }

  void read_exact(uint8_t* dst, size_t n) override {
    if (in_->data.size() < n) throw ChannelClosed("pipe drained before " + std::to_string(n) + " bytes");
    for (size_t i = 0; i < n; ++i) {
      dst[i] = in_->data.front();
      in_->data.pop_front();
    }
  }

 private:
  std::shared_ptr<PipeBuffer> in_, out_;
};

}  // namespace

DuplexPipe::DuplexPipe() {
  auto ab = std::make_shared<PipeBuffer>();
  auto ba = std::make_shared<PipeBuffer>();
  a = std::make_unique<PipeEnd>(ba, ab);
  b = std::make_unique<PipeEnd>(ab, ba);
}

std::unique_ptr<TcpByteStream> TcpByteStream::connect(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ChannelClosed("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ChannelClosed("bad address " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw ChannelClosed("connect to " + host + ":" + std::to_string(port) + " failed");
  }
  return std::make_unique<TcpByteStream>(fd);
}

TcpByteStream::~TcpByteStream() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpByteStream::write(std::span<const uint8_t> data) {
  size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd_, data.data() + off, data.size() - off);
    if (n <= 0) throw ChannelClosed("tcp write failed");
    off += static_cast<size_t>(n);
  }
}

void TcpByteStream::read_exact(uint8_t* dst, size_t n) {
  size_t off = 0;
  while (off < n) {
    ssize_t got = ::read(fd_, dst + off, n - off);
    if (got <= 0) throw ChannelClosed("tcp stream closed");
    off += static_cast<size_t>(got);
  }
}

TcpListener::TcpListener(int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ChannelClosed("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    throw ChannelClosed("bind failed on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(fd_, 1) != 0) {
    ::close(fd_);
    throw ChannelClosed("listen failed");
  }
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpByteStream> TcpListener::accept_one() {
  int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw ChannelClosed("accept failed");
  return std::make_unique<TcpByteStream>(fd);
}

// ---- framed stream transport ---------------------------------------------------------

StreamTransport::StreamTransport(ByteStream& stream, Direction send_direction, ChannelStats* stats,
                                 AuditHook audit)
    : stream_(stream), send_dir_(send_direction), stats_(stats), audit_(std::move(audit)) {}

void StreamTransport::send(const Message& m) {
  std::vector<uint8_t> bytes = encode(m);
  uint32_t len = static_cast<uint32_t>(bytes.size());
  uint8_t prefix[4];
  std::memcpy(prefix, &len, 4);
  stream_.write(std::span<const uint8_t>(prefix, 4));
  stream_.write(bytes);
  if (stats_) {
    stats_->messages += 1;
    (send_dir_ == Direction::kClientToServer ? stats_->bytes_up : stats_->bytes_down) +=
        bytes.size();
  }
  if (audit_) audit_(send_dir_, m, bytes.size());
}

Message StreamTransport::recv() {
  uint8_t prefix[4];
  stream_.read_exact(prefix, 4);
  uint32_t len;
  std::memcpy(&len, prefix, 4);
  if (len > (1u << 30)) throw InvariantViolation("frame length out of range");
  std::vector<uint8_t> bytes(len);
  stream_.read_exact(bytes.data(), len);
  return decode(bytes);
}

}  // namespace collafuse
