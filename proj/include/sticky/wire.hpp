#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sticky/event_log.hpp"
#include "sticky/ids.hpp"

namespace sticky {

// Frame payloads are single-line JSON objects with sorted keys and a "type"
// member: turn, first_token, done, ping, pong, error.

struct TurnWire {
  SessionId session;
  int turn_index = 0;
  std::int64_t required_context_tokens = 0;
  std::int64_t new_tokens = 0;
  std::int64_t output_tokens = 0;

  bool operator==(const TurnWire&) const = default;
};

// The "done" frame. Timings are node-side microseconds.
struct DoneWire {
  NodeId node;
  TurnStatus status = TurnStatus::Ok;
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  bool cold_start = false;
  std::int64_t committed_tokens = 0;
  std::int64_t queue_us = 0;
  std::int64_t prefill_us = 0;
  std::int64_t ttft_us = 0;
  std::int64_t decode_us = 0;
  std::int64_t total_us = 0;
  std::vector<std::int64_t> tpot_us;

  bool operator==(const DoneWire&) const = default;
};

std::string encode_turn(const TurnWire& t);
std::string encode_first_token(const NodeId& node);
std::string encode_done(const DoneWire& d);
std::string encode_ping();
std::string encode_pong(const NodeId& node);
std::string encode_error(std::string_view code, std::string_view message);

// Type tag of a payload. Throws ProtocolError for malformed JSON or a
// missing/unknown type.
std::string message_type(std::string_view payload);

// Throw ProtocolError naming the bad field.
TurnWire decode_turn(std::string_view payload);
DoneWire decode_done(std::string_view payload);
NodeId decode_first_token(std::string_view payload);
// (code, message) of an error frame.
std::pair<std::string, std::string> decode_error(std::string_view payload);

}  // namespace sticky
