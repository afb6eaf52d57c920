#include "sticky/node_server.hpp"

#include <cmath>

#include "sticky/cost_model.hpp"
#include "sticky/errors.hpp"
#include "sticky/wire.hpp"

namespace sticky {

using Clock = std::chrono::steady_clock;
using std::chrono::microseconds;

namespace {

std::int64_t us_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration_cast<microseconds>(b - a).count();
}

}  // namespace

NodeServer::NodeServer(const Scenario& scenario, NodeId id, const std::string& host,
                       std::uint16_t port)
    : id_(std::move(id)),
      spec_(scenario.node(id_)),
      seed_(scenario.seed),
      listener_(host, port),
      epoch_(Clock::now()),
      admit_gap_(std::max<std::int64_t>(1, std::llround(1e6 / spec_.cost.service_rate_reqs))),
      cache_(spec_.capacity_tokens),
      next_admit_(epoch_) {}

NodeServer::~NodeServer() { stop(); }

void NodeServer::start() { accept_thread_ = std::thread([this] { accept_loop(); }); }

void NodeServer::stop() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  listener_.close();
  std::list<std::unique_ptr<Conn>> conns;
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) c->sock.shutdown();
    conns.swap(conns_);
  }
  for (auto& c : conns)
    if (c->thread.joinable()) c->thread.join();
}

CacheCounters NodeServer::counters() const {
  std::lock_guard lock(mu_);
  return cache_.counters();
}

std::int64_t NodeServer::now_us() const { return us_between(epoch_, Clock::now()); }

void NodeServer::accept_loop() {
  while (!stopping_) {
    auto sock = listener_.accept_for(50);
    if (!sock) continue;
    std::lock_guard lock(conns_mu_);
    if (stopping_) break;
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->done) {
        (*it)->thread.join();
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
    auto conn = std::make_unique<Conn>();
    conn->sock = std::move(*sock);
    Conn* raw = conn.get();
    conns_.push_back(std::move(conn));
    raw->thread = std::thread([this, raw] { serve(raw); });
  }
}

void NodeServer::serve(Conn* conn) {
  Socket& sock = conn->sock;
  try {
    while (!stopping_) {
      auto frame = read_frame(sock);
      if (!frame) break;
      const auto recv = Clock::now();
      std::string type;
      try {
        type = message_type(*frame);
        if (type == "ping") {
          write_frame(sock, encode_pong(id_));
        } else if (type == "turn") {
          handle_turn(sock, *frame, recv);
        } else {
          write_frame(sock, encode_error("bad_request", "unsupported message type '" + type + "'"));
        }
      } catch (const ProtocolError& e) {
        write_frame(sock, encode_error("bad_request", e.what()));
      }
    }
  } catch (const Error&) {
    // Peer went away or the server is stopping.
  }
  conn->done = true;
}

void NodeServer::handle_turn(Socket& sock, const std::string& payload, Clock::time_point recv) {
  const TurnWire t = decode_turn(payload);
  Clock::time_point start;
  {
    std::lock_guard lock(mu_);
    start = std::max(recv, next_admit_);
    next_admit_ = start + admit_gap_;
  }
  std::this_thread::sleep_until(start);

  CacheOutcome outcome;
  {
    std::lock_guard lock(mu_);
    outcome = cache_.lookup(t.session, t.required_context_tokens, now_us());
  }
  const TurnDraws draws = draw_turn(spec_.cost, seed_, t.session, t.turn_index, t.output_tokens);
  const std::int64_t prefill_us = to_us(prefill_latency(spec_.cost, outcome.miss_tokens));
  const auto first = start + microseconds(prefill_us + draws.ttft_floor_us);
  std::this_thread::sleep_until(first);
  write_frame(sock, encode_first_token(id_));
  std::this_thread::sleep_until(first + microseconds(draws.decode_us()));

  DoneWire d;
  d.node = id_;
  {
    std::lock_guard lock(mu_);
    const std::int64_t before = cache_.cached_prefix(t.session);
    try {
      cache_.commit(t.session, t.required_context_tokens, now_us());
      d.committed_tokens = t.required_context_tokens - before;
    } catch (const CacheError&) {
      d.committed_tokens = 0;
    }
  }
  d.hit_tokens = outcome.hit_tokens;
  d.miss_tokens = outcome.miss_tokens;
  d.cold_start = outcome.cold_start;
  d.queue_us = us_between(recv, start);
  d.prefill_us = prefill_us;
  d.ttft_us = us_between(recv, first);
  d.decode_us = draws.decode_us();
  d.total_us = us_between(recv, Clock::now());
  d.tpot_us = draws.tpot_us;
  write_frame(sock, encode_done(d));
}

}  // namespace sticky
