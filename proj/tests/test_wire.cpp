#include <doctest.h>

#include <thread>

#include "sticky/errors.hpp"
#include "sticky/net.hpp"
#include "sticky/wire.hpp"

using namespace sticky;

TEST_CASE("turn message round trip") {
  const TurnWire t{SessionId("s-1"), 3, 2578, 128, 40};
  const std::string text = encode_turn(t);
  CHECK(text ==
        R"({"new_tokens":128,"output_tokens":40,"required_context_tokens":2578,"session_id":"s-1","turn_index":3,"type":"turn"})");
  CHECK(decode_turn(text) == t);
  CHECK(message_type(text) == "turn");
}

TEST_CASE("done message round trip") {
  DoneWire d;
  d.node = NodeId("n1");
  d.status = TurnStatus::ReroutedCold;
  d.hit_tokens = 0;
  d.miss_tokens = 2450;
  d.cold_start = true;
  d.committed_tokens = 2450;
  d.queue_us = 5;
  d.prefill_us = 450065;
  d.ttft_us = 830070;
  d.decode_us = 100;
  d.total_us = 830170;
  d.tpot_us = {40, 60};
  CHECK(decode_done(encode_done(d)) == d);
  CHECK(decode_first_token(encode_first_token(NodeId("n1"))) == NodeId("n1"));
  CHECK(decode_error(encode_error("bad_request", "nope")) == std::pair<std::string, std::string>{"bad_request", "nope"});
  CHECK(message_type(encode_ping()) == "ping");
  CHECK(message_type(encode_pong(NodeId("x"))) == "pong");
}

TEST_CASE("malformed messages") {
  CHECK_THROWS_AS(message_type("not json"), ProtocolError);
  CHECK_THROWS_AS(message_type("[1]"), ProtocolError);
  CHECK_THROWS_AS(message_type("{}"), ProtocolError);
  CHECK_THROWS_AS(decode_turn(encode_ping()), ProtocolError);
  CHECK_THROWS_AS(decode_turn(R"({"type":"turn","session_id":"s"})"), ProtocolError);
  CHECK_THROWS_AS(
      decode_turn(R"({"type":"turn","session_id":"s","turn_index":"0","required_context_tokens":1,"new_tokens":1,"output_tokens":1})"),
      ProtocolError);
  CHECK_THROWS_AS(
      decode_turn(R"({"type":"turn","session_id":"s","turn_index":0,"required_context_tokens":1,"new_tokens":2,"output_tokens":1})"),
      ProtocolError);
  CHECK_THROWS_AS(
      decode_turn(R"({"type":"turn","session_id":"","turn_index":0,"required_context_tokens":1,"new_tokens":1,"output_tokens":1})"),
      ProtocolError);
  DoneWire d;
  std::string text = encode_done(d);
  text.replace(text.find("\"ok\""), 4, "\"meh\"");
  CHECK_THROWS_AS(decode_done(text), ProtocolError);
}

TEST_CASE("frames over a loopback socket") {
  Listener l("127.0.0.1", 0);
  REQUIRE(l.port() != 0);
  std::thread server([&] {
    auto s = l.accept_for(2000);
    REQUIRE(s);
    while (auto f = read_frame(*s)) write_frame(*s, "echo:" + *f);
  });
  Socket c = connect_to("127.0.0.1", l.port(), 1000);
  write_frame(c, "hello");
  write_frame(c, "");
  CHECK(read_frame(c) == std::optional<std::string>("echo:hello"));
  CHECK(read_frame(c) == std::optional<std::string>("echo:"));
  std::string big(kMaxFrameBytes + 1, 'x');
  CHECK_THROWS_AS(write_frame(c, big), ProtocolError);
  c.close();
  server.join();
}

TEST_CASE("oversized length prefix is rejected") {
  Listener l("127.0.0.1", 0);
  std::thread server([&] {
    auto s = l.accept_for(2000);
    REQUIRE(s);
    s->send_all(std::string("\x7f\xff\xff\xff", 4));
  });
  Socket c = connect_to("127.0.0.1", l.port(), 1000);
  CHECK_THROWS_AS(read_frame(c), ProtocolError);
  server.join();
}

TEST_CASE("port in use and unreachable peers") {
  Listener l("127.0.0.1", 0);
  CHECK_THROWS_AS(Listener("127.0.0.1", l.port()), PortInUseError);
  const std::uint16_t port = l.port();
  l.close();
  CHECK_THROWS_AS(connect_to("127.0.0.1", port, 200), Error);
  CHECK_FALSE(l.accept_for(10));
}
