#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "collafuse/protocol.hpp"
#include "collafuse/rng.hpp"

using namespace collafuse;

namespace {

TrainBatchUpload sample_upload(uint64_t seed, int round = 0) {
  Rng rng(seed);
  TrainBatchUpload m;
  m.x_ts = Tensor({2, 3}, rng.normal_array(6));
  m.eps_s = Tensor({2, 3}, rng.normal_array(6));
  m.t_s = {40, 77};
  m.labels = {1, -1};
  m.client_id = 3;
  m.round = round;
  return m;
}

bool messages_equal(const Message& a, const Message& b) {
  if (a.index() != b.index()) return false;
  auto bytes_a = encode(a);
  auto bytes_b = encode(b);
  return bytes_a == bytes_b;
}

}  // namespace

TEST_CASE("roundtrip is the identity on encoded bytes") {
  Message msgs[] = {
      sample_upload(1),
      InferenceRequest{{3}, 1, 7u, 0},
      InferenceRequest{{2, 2}, 2, std::nullopt, 4},
      InferenceResponse{Tensor({1, 4}, ArrayX::LinSpaced(4, -1.0, 1.0)), 25, 99u},
  };
  for (const Message& m : msgs) {
    auto bytes = encode(m);
    Message back = decode(bytes);
    auto bytes2 = encode(back);
    CHECK(bytes == bytes2);
    CHECK(messages_equal(m, back));
  }
}

TEST_CASE("request size is exactly what the format definition forces") {
  InferenceRequest req{{3}, 1, 7u, 0};
  // header: magic 4 + tag 1 + length 4 + digest 4
  // payload: labels (4 + 4*1) + count 4 + seed flag 1 + seed 8 + client id 4
  const size_t expect = (4 + 1 + 4 + 4) + (4 + 4) + 4 + (1 + 8) + 4;
  CHECK(encoded_size(req) == expect);
  CHECK(encode(Message{req}).size() == expect);
}

TEST_CASE("upload tensors downcast within 2^-20 of scale") {
  Rng rng(50);
  TrainBatchUpload m;
  m.x_ts = Tensor({2, 32}, 10.0 * rng.normal_array(64));
  m.eps_s = Tensor({2, 32}, rng.normal_array(64));
  m.t_s = {5, 9};
  m.labels = {0, 1};
  auto back = std::get<TrainBatchUpload>(decode(encode(Message{m})));
  const Scalar scale = m.x_ts.data().abs().maxCoeff();
  CHECK((back.x_ts.data() - m.x_ts.data()).abs().maxCoeff() <= scale * std::pow(2.0, -20.0));
  CHECK((back.x_ts.data() - m.x_ts.data()).abs().maxCoeff() > 0.0);  // lossy by design
}

TEST_CASE("inference intermediates cross the wire losslessly") {
  Rng rng(51);
  InferenceResponse m{Tensor({1, 16}, rng.normal_array(16)), 5, 0};
  auto back = std::get<InferenceResponse>(decode(encode(Message{m})));
  CHECK((back.x_tz.data() == m.x_tz.data()).all());
}

TEST_CASE("decode rejects malformed frames") {
  CHECK_THROWS_AS(decode({}), Truncated);

  auto bytes = encode(Message{sample_upload(2)});
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  CHECK_THROWS_AS(decode(bad_magic), BadMagic);

  auto short_payload = bytes;
  short_payload.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode(short_payload), Truncated);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode(trailing), InvariantViolation);
}

TEST_CASE("encode validates message invariants") {
  TrainBatchUpload bad = sample_upload(3);
  bad.t_s = {40};  // batch of 2
  CHECK_THROWS_AS(encode(Message{bad}), InvariantViolation);

  TrainBatchUpload low = sample_upload(4);
  low.t_s = {0, 77};
  CHECK_THROWS_AS(encode(Message{low}), InvariantViolation);

  InferenceRequest req{{1, 2}, 1, std::nullopt, 0};
  CHECK_THROWS_AS(encode(Message{req}), InvariantViolation);
}

TEST_CASE("fuzz: any single-byte tamper is detected") {
  auto bytes = encode(Message{sample_upload(5)});
  Rng rng(6000);
  int detected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto mutated = bytes;
    const size_t pos = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(bytes.size()) - 1));
    uint8_t repl = static_cast<uint8_t>(rng.uniform_int(0, 255));
    while (repl == bytes[pos]) repl = static_cast<uint8_t>(rng.uniform_int(0, 255));
    mutated[pos] = repl;
    try {
      (void)decode(mutated);
    } catch (const Error&) {
      ++detected;
    }
  }
  CHECK(detected == 1000);
}

TEST_CASE("simulated channel: loopback, accounting, ordering") {
  SimulatedChannel ch;
  Message m = sample_upload(7);
  const size_t len = encode(m).size();
  ch.client_end().send(m);
  CHECK(ch.stats().bytes_up == len);
  CHECK(ch.stats().bytes_down == 0);
  CHECK(ch.stats().messages == 1);
  CHECK(ch.server_end().has_pending());
  Message got = ch.server_end().recv();
  CHECK(messages_equal(m, got));

  // 100 interleaved messages keep per-direction FIFO order
  for (int i = 0; i < 50; ++i) {
    ch.client_end().send(Message{sample_upload(100, i)});
    ch.server_end().send(Message{InferenceResponse{Tensor({1, 1}, ArrayX::Constant(1, i)), 1,
                                                   static_cast<uint64_t>(i)}});
  }
  for (int i = 0; i < 50; ++i) {
    auto up = std::get<TrainBatchUpload>(ch.server_end().recv());
    CHECK(up.round == i);
    auto down = std::get<InferenceResponse>(ch.client_end().recv());
    CHECK(down.seed_used == static_cast<uint64_t>(i));
  }

  CHECK_THROWS_AS(ch.server_end().recv(), ChannelClosed);
  ch.close();
  CHECK_THROWS_AS(ch.client_end().send(m), ChannelClosed);
}

TEST_CASE("audit hook observes every message") {
  SimulatedChannel ch;
  int uploads = 0, responses = 0;
  size_t audited_bytes = 0;
  ch.set_audit([&](Direction dir, const Message& m, size_t bytes) {
    audited_bytes += bytes;
    if (dir == Direction::kClientToServer) {
      CHECK(std::holds_alternative<TrainBatchUpload>(m));
      ++uploads;
    } else {
      ++responses;
    }
  });
  ch.client_end().send(Message{sample_upload(8)});
  ch.server_end().send(Message{InferenceResponse{Tensor({1, 1}, ArrayX::Zero(1)), 1, 0}});
  CHECK(uploads == 1);
  CHECK(responses == 1);
  CHECK(audited_bytes == ch.stats().bytes_up + ch.stats().bytes_down);
}

TEST_CASE("latency accounting accumulates per message and byte") {
  SimulatedChannel ch;
  ch.set_latency({0.5, 0.001});
  Message m{InferenceRequest{{0}, 1, std::nullopt, 0}};
  const size_t len = encode(m).size();
  ch.client_end().send(m);
  CHECK(ch.simulated_latency_s() == doctest::Approx(0.5 + 0.001 * static_cast<double>(len)));
}

TEST_CASE("stream transport over a pipe delivers the simulated channel's sequences") {
  std::vector<Message> seq;
  for (int i = 0; i < 5; ++i) seq.push_back(sample_upload(200 + static_cast<uint64_t>(i), i));
  seq.push_back(InferenceRequest{{1}, 1, 42u, 2});

  SimulatedChannel sim;
  std::vector<Message> via_sim;
  for (const auto& m : seq) sim.client_end().send(m);
  for (size_t i = 0; i < seq.size(); ++i) via_sim.push_back(sim.server_end().recv());

  DuplexPipe pipe;
  ChannelStats stats;
  StreamTransport client(*pipe.a, Direction::kClientToServer, &stats);
  StreamTransport server(*pipe.b, Direction::kClientToServer);
  std::vector<Message> via_stream;
  for (const auto& m : seq) client.send(m);
  for (size_t i = 0; i < seq.size(); ++i) via_stream.push_back(server.recv());

  REQUIRE(via_sim.size() == via_stream.size());
  for (size_t i = 0; i < via_sim.size(); ++i) {
    CHECK(messages_equal(via_sim[i], via_stream[i]));
    CHECK(messages_equal(via_sim[i], seq[i]));
  }
  CHECK(stats.messages == seq.size());
  CHECK(stats.bytes_up > 0);

  // drained pipe reports closure rather than corrupt frames
  CHECK_THROWS_AS(server.recv(), ChannelClosed);
}

TEST_CASE("stream transport over loopback tcp") {
  TcpListener listener(0);
  auto client_stream = TcpByteStream::connect("127.0.0.1", listener.port());
  auto server_stream = listener.accept_one();

  StreamTransport client(*client_stream, Direction::kClientToServer);
  StreamTransport server(*server_stream, Direction::kServerToClient);

  Message m = sample_upload(9);
  client.send(m);
  Message got = server.recv();
  CHECK(messages_equal(m, got));

  server.send(Message{InferenceResponse{Tensor({1, 2}, ArrayX::Zero(2)), 3, 5}});
  auto resp = std::get<InferenceResponse>(client.recv());
  CHECK(resp.t_zeta == 3);
}
