#include "sticky/wire.hpp"

#include <json.hpp>

#include "sticky/errors.hpp"

namespace sticky {

using json = nlohmann::json;

namespace {

json parse(std::string_view payload) {
  json j = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (j.is_discarded()) throw ProtocolError("malformed JSON payload");
  if (!j.is_object()) throw ProtocolError("payload must be a JSON object");
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + key + "' has the wrong type");
  }
}

json expect(std::string_view payload, const char* type) {
  json j = parse(payload);
  if (field<std::string>(j, "type") != type)
    throw ProtocolError(std::string("expected a '") + type + "' message");
  return j;
}

}  // namespace

std::string encode_turn(const TurnWire& t) {
  return json{{"type", "turn"},
              {"session_id", t.session.value},
              {"turn_index", t.turn_index},
              {"required_context_tokens", t.required_context_tokens},
              {"new_tokens", t.new_tokens},
              {"output_tokens", t.output_tokens}}
      .dump();
}

std::string encode_first_token(const NodeId& node) {
  return json{{"type", "first_token"}, {"node_id", node.value}}.dump();
}

std::string encode_done(const DoneWire& d) {
  return json{{"type", "done"},
              {"node_id", d.node.value},
              {"status", std::string(to_string(d.status))},
              {"cache",
               {{"hit_tokens", d.hit_tokens},
                {"miss_tokens", d.miss_tokens},
                {"cold_start", d.cold_start},
                {"committed_tokens", d.committed_tokens}}},
              {"timing",
               {{"queue_us", d.queue_us},
                {"prefill_us", d.prefill_us},
                {"ttft_us", d.ttft_us},
                {"decode_us", d.decode_us},
                {"total_us", d.total_us}}},
              {"tpot_us", d.tpot_us}}
      .dump();
}

std::string encode_ping() { return json{{"type", "ping"}}.dump(); }

std::string encode_pong(const NodeId& node) {
  return json{{"type", "pong"}, {"node_id", node.value}}.dump();
}

std::string encode_error(std::string_view code, std::string_view message) {
  return json{{"type", "error"}, {"code", code}, {"message", message}}.dump();
}

std::string message_type(std::string_view payload) { return field<std::string>(parse(payload), "type"); }

TurnWire decode_turn(std::string_view payload) {
  const json j = expect(payload, "turn");
  TurnWire t;
  t.session = SessionId(field<std::string>(j, "session_id"));
  t.turn_index = field<int>(j, "turn_index");
  t.required_context_tokens = field<std::int64_t>(j, "required_context_tokens");
  t.new_tokens = field<std::int64_t>(j, "new_tokens");
  t.output_tokens = field<std::int64_t>(j, "output_tokens");
  if (t.session.value.empty()) throw ProtocolError("field 'session_id' is empty");
  if (t.turn_index < 0 || t.required_context_tokens < 0 || t.new_tokens < 0 || t.output_tokens < 0)
    throw ProtocolError("turn fields must be non-negative");
  if (t.new_tokens > t.required_context_tokens)
    throw ProtocolError("new_tokens exceeds required_context_tokens");
  return t;
}

DoneWire decode_done(std::string_view payload) {
  const json j = expect(payload, "done");
  DoneWire d;
  d.node = NodeId(field<std::string>(j, "node_id"));
  try {
    d.status = parse_turn_status(field<std::string>(j, "status"));
  } catch (const Error& e) {
    throw ProtocolError(e.what());
  }
  const json cache = field<json>(j, "cache");
  d.hit_tokens = field<std::int64_t>(cache, "hit_tokens");
  d.miss_tokens = field<std::int64_t>(cache, "miss_tokens");
  d.cold_start = field<bool>(cache, "cold_start");
  d.committed_tokens = field<std::int64_t>(cache, "committed_tokens");
  const json timing = field<json>(j, "timing");
  d.queue_us = field<std::int64_t>(timing, "queue_us");
  d.prefill_us = field<std::int64_t>(timing, "prefill_us");
  d.ttft_us = field<std::int64_t>(timing, "ttft_us");
  d.decode_us = field<std::int64_t>(timing, "decode_us");
  d.total_us = field<std::int64_t>(timing, "total_us");
  d.tpot_us = field<std::vector<std::int64_t>>(j, "tpot_us");
  return d;
}

NodeId decode_first_token(std::string_view payload) {
  return NodeId(field<std::string>(expect(payload, "first_token"), "node_id"));
}

std::pair<std::string, std::string> decode_error(std::string_view payload) {
  const json j = expect(payload, "error");
  return {field<std::string>(j, "code"), field<std::string>(j, "message")};
}

}  // namespace sticky
