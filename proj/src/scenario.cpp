#include "sticky/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sticky/errors.hpp"
#include "sticky/hash.hpp"

namespace sticky {

using nlohmann::json;

std::string_view to_string(RoutingPolicy p) {
  return p == RoutingPolicy::RoundRobin ? "round_robin" : "sticky_consistent_hash";
}

RoutingPolicy parse_routing_policy(std::string_view s) {
  if (s == "sticky_consistent_hash" || s == "sticky") return RoutingPolicy::StickyConsistentHash;
  if (s == "round_robin") return RoutingPolicy::RoundRobin;
  throw ConfigError("unknown routing_policy '" + std::string(s) +
                    "' (expected sticky_consistent_hash or round_robin)");
}

void Scenario::validate() const {
  if (nodes.empty()) throw ConfigError("scenario: at least one node is required");
  if (!(duration_s > 0.0)) throw ConfigError("scenario: duration_s must be > 0");
  if (request_timeout_ms <= 0) throw ConfigError("scenario: request_timeout_ms must be > 0");
  std::set<NodeId> ids;
  for (const auto& n : nodes) {
    if (n.id.value.empty()) throw ConfigError("scenario: node id must be non-empty");
    if (!ids.insert(n.id).second) throw ConfigError("scenario: duplicate node '" + n.id.value + "'");
    if (n.weight < 1) throw ConfigError("scenario: node '" + n.id.value + "' weight must be >= 1");
    if (n.capacity_tokens <= 0)
      throw ConfigError("scenario: node '" + n.id.value + "' capacity_tokens must be > 0");
    if (!(n.probe_latency_ms >= 0.0))
      throw ConfigError("scenario: node '" + n.id.value + "' probe_latency_ms must be >= 0");
    n.cost.validate();
  }
  health.validate();
  workload.validate();
  for (const auto& f : faults) {
    if (!ids.count(f.node)) throw ConfigError("scenario: fault references unknown node '" + f.node.value + "'");
    if (f.fail_at_ms < 0) throw ConfigError("scenario: fault fail_at_ms must be >= 0");
    if (f.recover_at_ms && *f.recover_at_ms <= f.fail_at_ms)
      throw ConfigError("scenario: fault recover_at_ms must be after fail_at_ms");
  }
  split_address(live.gateway);
  split_address(live.admin);
  for (const auto& [id, addr] : live.nodes) {
    if (!ids.count(id)) throw ConfigError("scenario: live address for unknown node '" + id.value + "'");
    split_address(addr);
  }
  if (vnodes_per_weight < 1) throw ConfigError("scenario: ring.vnodes_per_weight must be >= 1");
}

Ring Scenario::build_ring() const {
  std::vector<Member> members;
  for (const auto& n : nodes) members.push_back({n.id, n.weight});
  return Ring::build(std::move(members), vnodes_per_weight, hash_seed);
}

const NodeSpec& Scenario::node(const NodeId& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw ConfigError("scenario: unknown node '" + id.value + "'");
}

void Scenario::apply_preset(std::string_view preset_name) {
  const CostModel m = preset(preset_name).first;
  for (auto& n : nodes) n.cost = m;
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw ConfigError("address '" + addr + "' must be host:port");
  const std::string host = addr.substr(0, colon);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw ConfigError("address '" + addr + "' has an invalid port");
  return {host, static_cast<std::uint16_t>(port)};
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

json dist_json(const Distribution& d) {
  json j;
  j["kind"] = std::string(to_string(d.kind()));
  switch (d.kind()) {
    case Distribution::Kind::Constant: j["value"] = d.a(); break;
    case Distribution::Kind::Uniform: j["lo"] = d.a(); j["hi"] = d.b(); break;
    case Distribution::Kind::Lognormal: j["median"] = d.a(); j["sigma"] = d.b(); break;
    case Distribution::Kind::Geometric: j["min"] = d.a(); j["mean"] = d.b(); break;
  }
  return j;
}

json cost_json(const CostModel& m) {
  return {{"prefill_base_ms", m.prefill_base_ms},
          {"prefill_ms_per_token", m.prefill_ms_per_token},
          {"ttft_floor", dist_json(m.ttft_floor)},
          {"tpot", dist_json(m.tpot)},
          {"endpoint_asr", dist_json(m.endpoint_asr)},
          {"tts", dist_json(m.tts)},
          {"playout", dist_json(m.playout)},
          {"service_rate_reqs", m.service_rate_reqs}};
}

json profile_json(const WorkloadProfile& p) {
  return {{"name", p.name},
          {"initial_context_tokens", dist_json(p.initial_context_tokens)},
          {"new_tokens_per_turn", dist_json(p.new_tokens_per_turn)},
          {"output_tokens_per_turn", dist_json(p.output_tokens_per_turn)},
          {"turns_per_session", dist_json(p.turns_per_session)},
          {"inter_turn_gap_ms", dist_json(p.inter_turn_gap_ms)},
          {"arrival_rate", p.arrival_rate}};
}

}  // namespace

std::string Scenario::canonical() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["duration_s"] = duration_s;
  j["routing_policy"] = std::string(to_string(routing_policy));
  j["request_timeout_ms"] = request_timeout_ms;
  j["ring"] = {{"vnodes_per_weight", vnodes_per_weight}, {"hash_seed", hash_seed}};
  json nodes_j = json::array();
  for (const auto& n : nodes)
    nodes_j.push_back({{"id", n.id.value},
                       {"weight", n.weight},
                       {"capacity_tokens", n.capacity_tokens},
                       {"probe_latency_ms", n.probe_latency_ms},
                       {"cost", cost_json(n.cost)}});
  j["nodes"] = nodes_j;
  j["health"] = {{"enabled", health.enabled},
                 {"probe_interval_ms", health.probe_interval_ms},
                 {"probe_timeout_ms", health.probe_timeout_ms},
                 {"fail_threshold", health.fail_threshold},
                 {"recover_threshold", health.recover_threshold},
                 {"degraded_latency_ms", health.degraded_latency_ms}};
  json mix = json::array();
  for (const auto& wp : workload.profiles)
    mix.push_back({{"profile", profile_json(wp.profile)}, {"weight", wp.weight}});
  j["workload"] = {{"arrival_rate", workload.arrival_rate}, {"mix", mix}};
  json faults_j = json::array();
  for (const auto& f : faults) {
    json fj = {{"node", f.node.value}, {"fail_at_ms", f.fail_at_ms}};
    if (f.recover_at_ms) fj["recover_at_ms"] = *f.recover_at_ms;
    faults_j.push_back(fj);
  }
  j["faults"] = faults_j;
  return j.dump();
}

std::string Scenario::digest() const { return hex64(hash64(canonical(), 0)); }

// ---------------------------------------------------------------------------
// Strict parser

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const {
    int line = 0, col = 0;
    if (!key.empty()) locate("\"" + key + "\"", line, col);
    std::string where = line > 0 ? " (line " + std::to_string(line) + ", column " +
                                       std::to_string(col) + ")"
                                 : "";
    throw ParseError("scenario: " + msg + where, line, col);
  }

  void locate(const std::string& needle, int& line, int& col) const {
    const auto pos = text_.find(needle);
    if (pos == std::string_view::npos) return;
    line = 1;
    col = 1;
    for (std::size_t i = 0; i < pos; ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  }

 private:
  std::string_view text_;
};

// Object reader that records which keys were consumed and rejects the rest.
class Obj {
 public:
  Obj(const Parser& p, const json& j, std::string path) : p_(p), j_(j), path_(std::move(path)) {
    if (!j_.is_object()) p_.fail("'" + label() + "' must be an object", last_key());
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  Obj obj(const std::string& key) { return Obj(p_, raw(key), join(key)); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return req<T>(key);
  }

  template <typename T>
  T req(const std::string& key) {
    if (!has(key)) p_.fail("missing required key '" + join(key) + "'", last_key());
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::runtime_error("expected boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::runtime_error("expected integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
            throw std::runtime_error("expected non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::runtime_error("expected number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::runtime_error("expected string");
      }
      return v.get<T>();
    } catch (const std::exception& e) {
      p_.fail("bad value for '" + join(key) + "': " + e.what(), key);
    }
  }

  // Rejects keys not consumed so far.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) p_.fail("unknown key '" + join(it.key()) + "'", it.key());
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const Parser& parser() const { return p_; }
  const std::string& path() const { return path_; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  std::string last_key() const {
    const auto dot = path_.rfind('.');
    std::string k = dot == std::string::npos ? path_ : path_.substr(dot + 1);
    const auto br = k.find('[');
    return br == std::string::npos ? k : k.substr(0, br);
  }

  const Parser& p_;
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename F>
auto guarded(const Parser& p, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    p.fail(e.what(), key);
  }
}

Distribution parse_dist(Obj& parent, const std::string& key) {
  const Parser& p = parent.parser();
  const json& v = parent.raw(key);
  if (v.is_number()) return guarded(p, key, [&] { return Distribution::constant(v.get<double>()); });
  Obj o(p, v, parent.join(key));
  const std::string kind = o.req<std::string>("kind");
  Distribution d = guarded(p, key, [&] {
    if (kind == "constant") return Distribution::constant(o.req<double>("value"));
    if (kind == "uniform") return Distribution::uniform(o.req<double>("lo"), o.req<double>("hi"));
    if (kind == "lognormal")
      return Distribution::lognormal(o.req<double>("median"), o.req<double>("sigma"));
    if (kind == "geometric")
      return Distribution::geometric(o.req<double>("min"), o.req<double>("mean"));
    throw ConfigError("unknown distribution kind '" + kind + "' in '" + parent.join(key) + "'");
  });
  o.finish();
  return d;
}

CostModel parse_cost(Obj o, const CostModel& base) {
  const Parser& p = o.parser();
  CostModel m = base;
  if (o.has("preset")) {
    const std::string name = o.req<std::string>("preset");
    m = guarded(p, "preset", [&] { return preset(name).first; });
  }
  m.prefill_base_ms = o.get<double>("prefill_base_ms", m.prefill_base_ms);
  m.prefill_ms_per_token = o.get<double>("prefill_ms_per_token", m.prefill_ms_per_token);
  if (o.has("ttft_floor")) m.ttft_floor = parse_dist(o, "ttft_floor");
  if (o.has("tpot")) m.tpot = parse_dist(o, "tpot");
  if (o.has("tpot_p99_ms")) {
    const double p99 = o.req<double>("tpot_p99_ms");
    m.tpot = guarded(p, "tpot_p99_ms", [&] { return tpot_for_p99(p99); });
  }
  if (o.has("endpoint_asr")) m.endpoint_asr = parse_dist(o, "endpoint_asr");
  if (o.has("tts")) m.tts = parse_dist(o, "tts");
  if (o.has("playout")) m.playout = parse_dist(o, "playout");
  m.service_rate_reqs = o.get<double>("service_rate_reqs", m.service_rate_reqs);
  o.finish();
  guarded(p, o.join("prefill_ms_per_token"), [&] { m.validate(); return 0; });
  return m;
}

WorkloadProfile parse_profile(Obj o) {
  WorkloadProfile prof;
  prof.name = o.req<std::string>("name");
  prof.initial_context_tokens = parse_dist(o, "initial_context_tokens");
  prof.new_tokens_per_turn = parse_dist(o, "new_tokens_per_turn");
  prof.output_tokens_per_turn = parse_dist(o, "output_tokens_per_turn");
  prof.turns_per_session = parse_dist(o, "turns_per_session");
  prof.inter_turn_gap_ms = parse_dist(o, "inter_turn_gap_ms");
  prof.arrival_rate = o.get<double>("arrival_rate", 0.0);
  o.finish();
  return prof;
}

// {"builtin": name} or {"profile": {...}}, optionally with a weight.
WeightedProfile parse_weighted(Obj& o, bool allow_weight) {
  const Parser& p = o.parser();
  WeightedProfile wp;
  if (o.has("builtin") == o.has("profile"))
    p.fail("'" + o.path() + "' needs exactly one of 'builtin' or 'profile'", "workload");
  if (o.has("builtin")) {
    const std::string name = o.req<std::string>("builtin");
    wp.profile = guarded(p, "builtin", [&] { return builtin_profile(name); });
  } else {
    wp.profile = parse_profile(o.obj("profile"));
  }
  if (allow_weight) wp.weight = o.get<double>("weight", 1.0);
  return wp;
}

WorkloadMix parse_workload(Obj o) {
  WorkloadMix mix;
  if (o.has("mix")) {
    const json& arr = o.raw("mix");
    if (!arr.is_array() || arr.empty()) o.parser().fail("'workload.mix' must be a non-empty array", "mix");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj item(o.parser(), arr[i], "workload.mix[" + std::to_string(i) + "]");
      mix.profiles.push_back(parse_weighted(item, true));
      item.finish();
    }
    mix.arrival_rate = o.req<double>("arrival_rate");
  } else {
    WeightedProfile wp = parse_weighted(o, false);
    wp.profile.arrival_rate = o.get<double>("arrival_rate", wp.profile.arrival_rate);
    mix = WorkloadMix::single(wp.profile);
  }
  o.finish();
  return mix;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; convert it to line/column.
    int line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("scenario: syntax error at line " + std::to_string(line) + ", column " +
                         std::to_string(col) + ": " + e.what(),
                     line, col);
  }

  const Parser p(text);
  Obj root(p, doc, "");
  Scenario s;
  s.name = root.get<std::string>("name", s.name);
  s.seed = root.get<std::uint64_t>("seed", s.seed);
  s.duration_s = root.get<double>("duration_s", s.duration_s);
  if (root.has("routing_policy")) {
    const std::string rp = root.req<std::string>("routing_policy");
    s.routing_policy = guarded(p, "routing_policy", [&] { return parse_routing_policy(rp); });
  }
  s.request_timeout_ms = root.get<std::int64_t>("request_timeout_ms", s.request_timeout_ms);
  const double bytes_per_token = root.get<double>("bytes_per_token", 1.0);
  if (!(bytes_per_token > 0.0)) p.fail("'bytes_per_token' must be > 0", "bytes_per_token");

  if (root.has("ring")) {
    Obj r = root.obj("ring");
    s.vnodes_per_weight = r.get<int>("vnodes_per_weight", s.vnodes_per_weight);
    s.hash_seed = r.get<std::uint64_t>("hash_seed", s.hash_seed);
    r.finish();
  }

  CostModel default_cost;
  if (root.has("cost")) default_cost = parse_cost(root.obj("cost"), CostModel{});

  if (!root.has("nodes")) p.fail("missing required key 'nodes'");
  const json& nodes = root.raw("nodes");
  if (!nodes.is_array()) p.fail("'nodes' must be an array", "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Obj n(p, nodes[i], "nodes[" + std::to_string(i) + "]");
    NodeSpec spec;
    spec.id = NodeId(n.req<std::string>("id"));
    spec.weight = n.get<int>("weight", spec.weight);
    if (n.has("capacity_tokens") && n.has("capacity_bytes"))
      p.fail("'" + n.join("capacity_bytes") + "' conflicts with capacity_tokens", "capacity_bytes");
    spec.capacity_tokens = n.get<std::int64_t>("capacity_tokens", spec.capacity_tokens);
    if (n.has("capacity_bytes"))
      spec.capacity_tokens = static_cast<std::int64_t>(
          static_cast<double>(n.req<std::int64_t>("capacity_bytes")) / bytes_per_token);
    spec.probe_latency_ms = n.get<double>("probe_latency_ms", spec.probe_latency_ms);
    spec.cost = n.has("cost") ? parse_cost(n.obj("cost"), default_cost) : default_cost;
    n.finish();
    s.nodes.push_back(std::move(spec));
  }

  if (root.has("health")) {
    Obj h = root.obj("health");
    s.health.enabled = h.get<bool>("enabled", s.health.enabled);
    s.health.probe_interval_ms = h.get<std::int64_t>("probe_interval_ms", s.health.probe_interval_ms);
    s.health.probe_timeout_ms = h.get<std::int64_t>("probe_timeout_ms", s.health.probe_timeout_ms);
    s.health.fail_threshold = h.get<int>("fail_threshold", s.health.fail_threshold);
    s.health.recover_threshold = h.get<int>("recover_threshold", s.health.recover_threshold);
    s.health.degraded_latency_ms =
        h.get<std::int64_t>("degraded_latency_ms", s.health.degraded_latency_ms);
    h.finish();
  }

  if (!root.has("workload")) p.fail("missing required key 'workload'");
  s.workload = parse_workload(root.obj("workload"));

  if (root.has("faults")) {
    const json& faults = root.raw("faults");
    if (!faults.is_array()) p.fail("'faults' must be an array", "faults");
    for (std::size_t i = 0; i < faults.size(); ++i) {
      Obj f(p, faults[i], "faults[" + std::to_string(i) + "]");
      Fault fault;
      fault.node = NodeId(f.req<std::string>("node"));
      fault.fail_at_ms = f.req<std::int64_t>("fail_at_ms");
      if (f.has("recover_at_ms")) fault.recover_at_ms = f.req<std::int64_t>("recover_at_ms");
      f.finish();
      s.faults.push_back(std::move(fault));
    }
  }

  if (root.has("live")) {
    Obj l = root.obj("live");
    s.live.gateway = l.get<std::string>("gateway", s.live.gateway);
    s.live.admin = l.get<std::string>("admin", s.live.admin);
    if (l.has("nodes")) {
      Obj ln = l.obj("nodes");
      for (const auto& n : s.nodes)
        if (ln.has(n.id.value)) s.live.nodes[n.id] = ln.req<std::string>(n.id.value);
      ln.finish();
    }
    l.finish();
  }
  root.finish();

  try {
    s.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ParseError(msg.starts_with("scenario: ") ? msg : "scenario: " + msg);
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("scenario: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

}  // namespace sticky
