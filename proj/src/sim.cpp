#include "sticky/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>

#include "sticky/cache.hpp"
#include "sticky/cost_model.hpp"
#include "sticky/errors.hpp"
#include "sticky/health.hpp"

namespace sticky {

namespace {

// Processing order for simultaneous events.
enum class Ev {
  FaultFail = 0,
  FaultRecover = 1,
  ProbeApply = 2,
  Probe = 3,
  TurnDone = 4,
  FirstToken = 5,
  PrefillDone = 6,
  ServiceStart = 7,
  HangEnd = 8,
  Release = 9,
};

struct QItem {
  std::int64_t time;
  Ev type;
  std::string entity;
  std::uint64_t seq;
  int ref;  // request id, trace index, fault index or probe-round index
  int gen;  // request generation; stale events are dropped

  bool operator>(const QItem& o) const {
    if (time != o.time) return time > o.time;
    if (type != o.type) return type > o.type;
    if (entity != o.entity) return entity > o.entity;
    return seq > o.seq;
  }
};

enum class Phase { Queued, Serving, Hung, Done };

struct Request {
  std::size_t trace_idx = 0;
  int attempt = 1;
  int gen = 0;
  Phase phase = Phase::Queued;
  NodeId node;
  std::int64_t release_us = 0;
  std::int64_t dispatch_us = 0;
  std::int64_t start_us = 0;
  std::int64_t prefill_us = 0;
  std::int64_t first_token_us = 0;
  CacheOutcome outcome;
  TurnDraws draws;
};

struct NodeState {
  const NodeSpec* spec = nullptr;
  NodeCache cache;
  bool alive = true;
  std::int64_t next_admit_us = 0;
  std::int64_t admit_gap_us = 0;
  std::set<int> active;

  explicit NodeState(const NodeSpec& s)
      : spec(&s),
        cache(s.capacity_tokens),
        admit_gap_us(std::max<std::int64_t>(1, std::llround(1e6 / s.cost.service_rate_reqs))) {}
};

struct SessionState {
  std::vector<std::size_t> turns;  // trace indices in turn order
  std::size_t next = 0;
  std::optional<NodeId> last_node;
};

struct ProbeRound {
  std::int64_t at_ms = 0;
  std::map<NodeId, ProbeResult> results;
};

class Engine {
 public:
  Engine(const Scenario& sc, std::span<const TurnRequest> trace)
      : sc_(sc), trace_(trace), full_ring_(sc.build_ring()), ring_(full_ring_) {
    for (const auto& n : sc_.nodes) {
      nodes_.emplace(n.id, NodeState(n));
      cluster_.push_back(NodeHealth{n.id});
    }
    std::sort(cluster_.begin(), cluster_.end(),
              [](const NodeHealth& a, const NodeHealth& b) { return a.node < b.node; });
    for (std::size_t i = 0; i < trace_.size(); ++i) sessions_[trace_[i].session].turns.push_back(i);
    for (auto& [id, s] : sessions_) {
      std::sort(s.turns.begin(), s.turns.end(), [&](std::size_t a, std::size_t b) {
        return trace_[a].turn_index < trace_[b].turn_index;
      });
    }
  }

  EventLog run() {
    for (auto& [id, s] : sessions_)
      push(trace_[s.turns[0]].arrival_us, Ev::Release, id.value, static_cast<int>(s.turns[0]));
    for (std::size_t i = 0; i < sc_.faults.size(); ++i) {
      const Fault& f = sc_.faults[i];
      push(f.fail_at_ms * 1000, Ev::FaultFail, f.node.value, static_cast<int>(i));
      if (f.recover_at_ms) push(*f.recover_at_ms * 1000, Ev::FaultRecover, f.node.value, static_cast<int>(i));
    }
    if (sc_.health.enabled && !trace_.empty()) push(0, Ev::Probe, "", 0);

    while (!queue_.empty()) {
      QItem item = queue_.top();
      queue_.pop();
      now_ = item.time;
      handle(item);
    }
    return std::move(log_);
  }

 private:
  void push(std::int64_t t, Ev type, const std::string& entity, int ref, int gen = 0) {
    queue_.push({t, type, entity, seq_++, ref, gen});
  }

  void log(Event e) {
    e.time_us = now_;
    log_.push(std::move(e));
  }

  void handle(const QItem& item) {
    switch (item.type) {
      case Ev::Release: on_release(static_cast<std::size_t>(item.ref)); break;
      case Ev::ServiceStart: if (live(item)) on_service_start(item.ref); break;
      case Ev::PrefillDone: if (live(item)) on_prefill_done(item.ref); break;
      case Ev::FirstToken: if (live(item)) on_first_token(item.ref); break;
      case Ev::TurnDone: if (live(item)) on_turn_done(item.ref); break;
      case Ev::HangEnd: if (live(item)) attempt_failed(item.ref); break;
      case Ev::FaultFail: on_fault_fail(sc_.faults[static_cast<std::size_t>(item.ref)]); break;
      case Ev::FaultRecover: on_fault_recover(sc_.faults[static_cast<std::size_t>(item.ref)]); break;
      case Ev::Probe: on_probe(); break;
      case Ev::ProbeApply: on_probe_apply(static_cast<std::size_t>(item.ref)); break;
    }
  }

  bool live(const QItem& item) const {
    const Request& r = requests_[static_cast<std::size_t>(item.ref)];
    return r.gen == item.gen && r.phase != Phase::Done;
  }

  const TurnRequest& turn_of(const Request& r) const { return trace_[r.trace_idx]; }

  // ---- turn lifecycle ----------------------------------------------------

  void on_release(std::size_t trace_idx) {
    const TurnRequest& t = trace_[trace_idx];
    log({.kind = EventKind::Arrival, .session = t.session.value, .turn = t.turn_index});
    Request r;
    r.trace_idx = trace_idx;
    r.release_us = now_;
    requests_.push_back(std::move(r));
    dispatch(static_cast<int>(requests_.size() - 1));
  }

  std::optional<NodeId> pick_node(const SessionId& session) {
    if (ring_.empty()) return std::nullopt;
    if (sc_.routing_policy == RoutingPolicy::StickyConsistentHash) return ring_.route(session);
    const auto& members = ring_.members();
    return members[rr_counter_++ % members.size()].id;
  }

  void dispatch(int id) {
    if (aborted_) return;
    Request& r = requests_[static_cast<std::size_t>(id)];
    const TurnRequest& t = turn_of(r);
    const std::optional<NodeId> target = pick_node(t.session);
    if (!target) {
      abort_run(id);
      return;
    }
    r.node = *target;
    r.dispatch_us = now_;
    ++r.gen;
    log({.kind = EventKind::Dispatch, .node = r.node.value, .session = t.session.value,
         .turn = t.turn_index, .attempt = r.attempt});
    NodeState& node = nodes_.at(r.node);
    node.active.insert(id);
    if (node.alive) {
      r.phase = Phase::Queued;
      const std::int64_t start = std::max(now_, node.next_admit_us);
      node.next_admit_us = start + node.admit_gap_us;
      push(start, Ev::ServiceStart, t.session.value, id, r.gen);
    } else {
      hang(id);
    }
  }

  void hang(int id) {
    Request& r = requests_[static_cast<std::size_t>(id)];
    r.phase = Phase::Hung;
    ++r.gen;
    const std::int64_t deadline = std::max(now_, r.dispatch_us + sc_.request_timeout_ms * 1000);
    push(deadline, Ev::HangEnd, turn_of(r).session.value, id, r.gen);
  }

  void on_service_start(int id) {
    Request& r = requests_[static_cast<std::size_t>(id)];
    const TurnRequest& t = turn_of(r);
    NodeState& node = nodes_.at(r.node);
    r.phase = Phase::Serving;
    r.start_us = now_;
    r.outcome = node.cache.lookup(t.session, t.required_context_tokens, now_);
    const CostModel& cost = node.spec->cost;
    r.draws = draw_turn(cost, sc_.seed, t.session, t.turn_index, t.output_tokens);
    r.prefill_us = to_us(prefill_latency(cost, r.outcome.miss_tokens));
    r.first_token_us = now_ + r.prefill_us + r.draws.ttft_floor_us;
    push(now_ + r.prefill_us, Ev::PrefillDone, t.session.value, id, r.gen);
    push(r.first_token_us, Ev::FirstToken, t.session.value, id, r.gen);
    push(r.first_token_us + r.draws.decode_us(), Ev::TurnDone, t.session.value, id, r.gen);
  }

  void on_prefill_done(int id) {
    const Request& r = requests_[static_cast<std::size_t>(id)];
    log({.kind = EventKind::PrefillDone, .node = r.node.value, .session = turn_of(r).session.value,
         .turn = turn_of(r).turn_index, .attempt = r.attempt, .value = r.outcome.miss_tokens});
  }

  void on_first_token(int id) {
    const Request& r = requests_[static_cast<std::size_t>(id)];
    log({.kind = EventKind::FirstToken, .node = r.node.value, .session = turn_of(r).session.value,
         .turn = turn_of(r).turn_index, .attempt = r.attempt});
  }

  void on_turn_done(int id) {
    Request& r = requests_[static_cast<std::size_t>(id)];
    const TurnRequest& t = turn_of(r);
    NodeState& node = nodes_.at(r.node);
    node.active.erase(id);
    r.phase = Phase::Done;

    const std::int64_t before = node.cache.cached_prefix(t.session);
    std::vector<Eviction> evicted;
    std::int64_t committed = 0;
    try {
      evicted = node.cache.commit(t.session, t.required_context_tokens, now_);
      committed = t.required_context_tokens - before;
    } catch (const CacheError& e) {
      log({.kind = EventKind::Eviction, .node = r.node.value, .session = t.session.value,
           .turn = t.turn_index, .detail = std::string("commit rejected: ") + e.what()});
    }
    for (const auto& ev : evicted)
      log({.kind = EventKind::Eviction, .node = r.node.value, .session = ev.session.value,
           .value = ev.tokens});

    SessionState& s = sessions_.at(t.session);
    TurnRecord rec = base_record(r);
    rec.hit_tokens = r.outcome.hit_tokens;
    rec.miss_tokens = r.outcome.miss_tokens;
    rec.cold_start = r.outcome.cold_start;
    rec.committed_tokens = committed;
    rec.rerouted = s.last_node && *s.last_node != r.node;
    rec.status = rec.rerouted && rec.cold_start ? TurnStatus::ReroutedCold : TurnStatus::Ok;
    rec.queue_us = r.start_us - r.dispatch_us;
    rec.prefill_us = r.prefill_us;
    rec.ttft_us = r.first_token_us - r.release_us;
    rec.decode_us = r.draws.decode_us();
    rec.total_us = now_ - r.release_us;
    rec.tpot_us = r.draws.tpot_us;
    rec.ttfa_us = r.draws.endpoint_asr_us + rec.ttft_us + r.draws.tts_us + r.draws.playout_us;
    s.last_node = r.node;
    finish_turn(std::move(rec), s);
  }

  TurnRecord base_record(const Request& r) const {
    const TurnRequest& t = turn_of(r);
    TurnRecord rec;
    rec.session = t.session;
    rec.turn_index = t.turn_index;
    rec.node = r.node;
    rec.attempts = r.attempt;
    rec.required_context_tokens = t.required_context_tokens;
    rec.new_tokens = t.new_tokens;
    rec.output_tokens = t.output_tokens;
    rec.release_us = r.release_us;
    rec.dispatch_us = r.dispatch_us;
    return rec;
  }

  void finish_turn(TurnRecord rec, SessionState& s) {
    Event e{.kind = EventKind::TurnDone, .node = rec.node.value, .session = rec.session.value,
            .turn = rec.turn_index, .attempt = rec.attempts,
            .detail = std::string(to_string(rec.status))};
    e.record = std::move(rec);
    log(std::move(e));
    ++completed_;
    if (++s.next < s.turns.size() && !aborted_) {
      const std::size_t next = s.turns[s.next];
      push(std::max(now_, trace_[next].arrival_us), Ev::Release, trace_[next].session.value,
           static_cast<int>(next));
    }
  }

  // The attempt's node is dead (hang ended) or was Removed under it.
  void attempt_failed(int id) {
    Request& r = requests_[static_cast<std::size_t>(id)];
    const TurnRequest& t = turn_of(r);
    nodes_.at(r.node).active.erase(id);
    log({.kind = EventKind::Failure, .node = r.node.value, .session = t.session.value,
         .turn = t.turn_index, .attempt = r.attempt});
    if (r.attempt < 2 && !aborted_) {
      ++r.attempt;
      dispatch(id);
      return;
    }
    fail_turn(id, TurnStatus::NodeError);
  }

  void fail_turn(int id, TurnStatus status) {
    Request& r = requests_[static_cast<std::size_t>(id)];
    r.phase = Phase::Done;
    ++r.gen;
    const TurnRequest& t = turn_of(r);
    if (r.draws.tpot_us.empty() && r.draws.ttft_floor_us == 0)
      r.draws = draw_turn(r.node.value.empty() ? sc_.nodes.front().cost : nodes_.at(r.node).spec->cost,
                          sc_.seed, t.session, t.turn_index, 0);
    TurnRecord rec = base_record(r);
    rec.status = status;
    rec.ttft_us = now_ - r.release_us;
    rec.total_us = now_ - r.release_us;
    rec.ttfa_us = r.draws.endpoint_asr_us + rec.ttft_us + r.draws.tts_us + r.draws.playout_us;
    finish_turn(std::move(rec), sessions_.at(t.session));
  }

  void abort_run(int id) {
    aborted_ = true;
    log({.kind = EventKind::Abort, .detail = "no capacity"});
    for (auto& [nid, node] : nodes_) {
      for (int other : std::set<int>(node.active)) {
        Request& o = requests_[static_cast<std::size_t>(other)];
        log({.kind = EventKind::Failure, .node = nid.value, .session = turn_of(o).session.value,
             .turn = turn_of(o).turn_index, .attempt = o.attempt});
        fail_turn(other, TurnStatus::NodeError);
      }
      node.active.clear();
    }
    fail_turn(id, TurnStatus::NoCapacity);
    while (!queue_.empty()) queue_.pop();
  }

  // ---- faults and health -------------------------------------------------

  void on_fault_fail(const Fault& f) {
    NodeState& node = nodes_.at(f.node);
    if (!node.alive) return;
    node.alive = false;
    node.cache.clear();
    log({.kind = EventKind::Fault, .node = f.node.value, .detail = "fail"});
    for (int id : node.active) {
      Request& r = requests_[static_cast<std::size_t>(id)];
      if (r.phase == Phase::Queued || r.phase == Phase::Serving) hang(id);
    }
  }

  void on_fault_recover(const Fault& f) {
    NodeState& node = nodes_.at(f.node);
    if (node.alive) return;
    node.alive = true;
    node.next_admit_us = now_;
    log({.kind = EventKind::Fault, .node = f.node.value, .detail = "recover"});
  }

  void on_probe() {
    if (completed_ >= trace_.size() || aborted_) return;
    const std::int64_t now_ms = now_ / 1000;
    ProbeRound round;
    round.at_ms = now_ms;
    double max_latency = 0;
    for (const auto& h : cluster_) {
      const bool due = !h.last_probe_at_ms || *h.last_probe_at_ms + sc_.health.probe_interval_ms <= now_ms;
      if (!due) continue;
      const NodeState& node = nodes_.at(h.node);
      ProbeResult res = node.alive
                            ? ProbeResult{true, node.spec->probe_latency_ms}
                            : ProbeResult{false, static_cast<double>(sc_.health.probe_timeout_ms)};
      res.latency_ms = std::min(res.latency_ms, static_cast<double>(sc_.health.probe_timeout_ms));
      max_latency = std::max(max_latency, res.latency_ms);
      round.results[h.node] = res;
      log({.kind = EventKind::Probe, .node = h.node.value, .value = res.ok ? 1 : 0});
    }
    rounds_.push_back(std::move(round));
    push(now_ + to_us(max_latency), Ev::ProbeApply, "", static_cast<int>(rounds_.size() - 1));
    push(now_ + sc_.health.probe_interval_ms * 1000, Ev::Probe, "", 0);
  }

  void on_probe_apply(std::size_t round_idx) {
    const ProbeRound& round = rounds_[round_idx];
    auto cycle = probe_cycle(
        cluster_, round.at_ms,
        [&](const NodeId& id) {
          auto it = round.results.find(id);
          // Nodes not probed in this round are not due, so probe_cycle skips them.
          return it == round.results.end() ? ProbeResult{} : it->second;
        },
        sc_.health);
    cluster_ = std::move(cycle.cluster);
    if (cycle.transitions.empty()) return;
    for (const auto& tr : cycle.transitions)
      log({.kind = EventKind::Transition, .node = tr.node.value,
           .detail = std::string(to_string(tr.from)) + "->" + std::string(to_string(tr.to))});
    try {
      ring_ = effective_ring(full_ring_, cluster_);
    } catch (const NoCapacityError&) {
      ring_ = Ring();
    }
    for (const auto& tr : cycle.transitions) {
      if (tr.to != HealthState::Removed) continue;
      NodeState& node = nodes_.at(tr.node);
      // In-flight work on a Removed node fails fast and is retried elsewhere.
      for (int id : std::set<int>(node.active)) attempt_failed(id);
    }
  }

  const Scenario& sc_;
  std::span<const TurnRequest> trace_;
  Ring full_ring_;
  Ring ring_;
  std::map<NodeId, NodeState> nodes_;
  std::vector<NodeHealth> cluster_;
  std::map<SessionId, SessionState> sessions_;
  std::vector<Request> requests_;
  std::vector<ProbeRound> rounds_;
  std::priority_queue<QItem, std::vector<QItem>, std::greater<>> queue_;
  EventLog log_;
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::size_t rr_counter_ = 0;
  std::size_t completed_ = 0;
  bool aborted_ = false;
};

}  // namespace

SimResult replay(std::span<const TurnRequest> trace, const Scenario& scenario) {
  scenario.validate();
  validate_trace(trace);
  SimResult out;
  out.log = Engine(scenario, trace).run();
  out.report = assemble(out.log, scenario.digest());
  return out;
}

SimResult run(const Scenario& scenario) {
  scenario.validate();
  const auto trace = generate_trace(scenario.workload, scenario.duration_s, scenario.seed);
  return replay(trace, scenario);
}

SimResult replay_file(const std::filesystem::path& trace_path, const Scenario& scenario) {
  std::ifstream in(trace_path);
  if (!in) throw ParseError("trace: cannot open '" + trace_path.string() + "'");
  const auto trace = read_trace(in);
  return replay(trace, scenario);
}

std::pair<SimResult, SimResult> run_ablation(const Scenario& scenario, RoutingPolicy a,
                                             RoutingPolicy b) {
  scenario.validate();
  const auto trace = generate_trace(scenario.workload, scenario.duration_s, scenario.seed);
  Scenario sa = scenario, sb = scenario;
  sa.routing_policy = a;
  sb.routing_policy = b;
  return {replay(trace, sa), replay(trace, sb)};
}

std::pair<SimResult, SimResult> run_health_ablation(const Scenario& scenario) {
  scenario.validate();
  const auto trace = generate_trace(scenario.workload, scenario.duration_s, scenario.seed);
  Scenario on = scenario, off = scenario;
  on.health.enabled = true;
  off.health.enabled = false;
  return {replay(trace, on), replay(trace, off)};
}

}  // namespace sticky
