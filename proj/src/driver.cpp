#include "sticky/driver.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <thread>

#include "sticky/cost_model.hpp"
#include "sticky/errors.hpp"
#include "sticky/net.hpp"
#include "sticky/wire.hpp"

namespace sticky {

using Clock = std::chrono::steady_clock;

namespace {

struct SessionRun {
  std::vector<const TurnRequest*> turns;
  std::vector<Event> events;
  std::string error;
};

class Driver {
 public:
  Driver(const Scenario& sc, const HostPort& gw) : sc_(sc), gw_(gw) {}

  void run_session(SessionRun& run) {
    try {
      Socket sock = connect_to(gw_.first, gw_.second, 2000);
      sock.set_read_timeout_ms(static_cast<int>(2 * sc_.request_timeout_ms + 5000));
      std::int64_t prev_done = 0;
      std::optional<NodeId> last_node;
      for (const TurnRequest* t : run.turns) {
        const std::int64_t release = std::max(t->arrival_us, prev_done);
        std::this_thread::sleep_until(t0_ + std::chrono::microseconds(release));
        const std::int64_t release_us = now_us();
        run.events.push_back({.time_us = release_us, .kind = EventKind::Arrival,
                              .session = t->session.value, .turn = t->turn_index});
        TurnRecord rec;
        rec.session = t->session;
        rec.turn_index = t->turn_index;
        rec.required_context_tokens = t->required_context_tokens;
        rec.new_tokens = t->new_tokens;
        rec.output_tokens = t->output_tokens;
        rec.release_us = release_us;

        DoneWire done;
        std::int64_t first_us = 0;
        for (int attempt = 1; attempt <= 2; ++attempt) {
          rec.attempts = attempt;
          rec.dispatch_us = now_us();
          write_frame(sock, encode_turn({t->session, t->turn_index, t->required_context_tokens,
                                         t->new_tokens, t->output_tokens}));
          first_us = 0;
          for (;;) {
            auto frame = read_frame(sock);
            if (!frame) throw Error("gateway closed the connection");
            const std::string type = message_type(*frame);
            if (type == "first_token") {
              first_us = now_us();
            } else if (type == "done") {
              done = decode_done(*frame);
              break;
            } else if (type == "error") {
              throw ProtocolError("gateway: " + decode_error(*frame).second);
            }
          }
          if (!done.node.value.empty())
            run.events.push_back({.time_us = rec.dispatch_us, .kind = EventKind::Dispatch,
                                  .node = done.node.value, .session = t->session.value,
                                  .turn = t->turn_index, .attempt = attempt});
          if (done.status != TurnStatus::NodeError) break;
          run.events.push_back({.time_us = now_us(), .kind = EventKind::Failure,
                                .node = done.node.value, .session = t->session.value,
                                .turn = t->turn_index, .attempt = attempt});
        }
        const std::int64_t done_us = now_us();
        rec.node = done.node;
        rec.status = done.status;
        rec.total_us = done_us - release_us;
        const CostModel& cost =
            done.node.value.empty() ? sc_.nodes.front().cost : sc_.node(done.node).cost;
        const TurnDraws draws = draw_turn(cost, sc_.seed, t->session, t->turn_index, 0);
        if (succeeded(done.status)) {
          rec.hit_tokens = done.hit_tokens;
          rec.miss_tokens = done.miss_tokens;
          rec.cold_start = done.cold_start;
          rec.committed_tokens = done.committed_tokens;
          rec.rerouted = last_node && *last_node != done.node;
          rec.queue_us = done.queue_us;
          rec.prefill_us = done.prefill_us;
          rec.ttft_us = (first_us > 0 ? first_us : done_us) - release_us;
          rec.decode_us = done.decode_us;
          rec.tpot_us = done.tpot_us;
          last_node = done.node;
        } else {
          rec.ttft_us = rec.total_us;
        }
        rec.ttfa_us = draws.endpoint_asr_us + rec.ttft_us + draws.tts_us + draws.playout_us;
        Event e{.time_us = done_us, .kind = EventKind::TurnDone, .node = rec.node.value,
                .session = rec.session.value, .turn = rec.turn_index, .attempt = rec.attempts,
                .detail = std::string(to_string(rec.status))};
        e.record = std::move(rec);
        run.events.push_back(std::move(e));
        prev_done = done_us;
      }
    } catch (const Error& e) {
      run.error = e.what();
    }
  }

  std::int64_t now_us() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0_).count();
  }

  const Scenario& sc_;
  HostPort gw_;
  Clock::time_point t0_;
};

}  // namespace

SimResult drive(std::span<const TurnRequest> trace, const Scenario& scenario,
                const HostPort& gateway) {
  scenario.validate();
  validate_trace(trace);
  // Fail early when nothing is listening.
  connect_to(gateway.first, gateway.second, 2000);

  std::map<SessionId, SessionRun> sessions;
  for (const auto& t : trace) sessions[t.session].turns.push_back(&t);
  std::vector<SessionRun*> order;
  for (auto& [id, s] : sessions) {
    std::sort(s.turns.begin(), s.turns.end(),
              [](const TurnRequest* a, const TurnRequest* b) { return a->turn_index < b->turn_index; });
    order.push_back(&s);
  }
  std::stable_sort(order.begin(), order.end(), [](const SessionRun* a, const SessionRun* b) {
    return a->turns.front()->arrival_us < b->turns.front()->arrival_us;
  });

  Driver driver(scenario, gateway);
  driver.t0_ = Clock::now();
  std::vector<std::thread> threads;
  for (SessionRun* s : order) {
    std::this_thread::sleep_until(driver.t0_ + std::chrono::microseconds(s->turns.front()->arrival_us));
    threads.emplace_back([&driver, s] { driver.run_session(*s); });
  }
  for (auto& th : threads) th.join();

  SimResult out;
  for (auto& [id, s] : sessions) {
    if (!s.error.empty()) throw Error("drive: session " + id.value + ": " + s.error);
    for (auto& e : s.events) out.log.push(std::move(e));
  }
  std::stable_sort(out.log.events.begin(), out.log.events.end(),
                   [](const Event& a, const Event& b) { return a.time_us < b.time_us; });
  out.report = assemble(out.log, scenario.digest());
  return out;
}

}  // namespace sticky
