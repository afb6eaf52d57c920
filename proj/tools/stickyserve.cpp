// stickyserve: scenario validation, simulation, trace replay, report diffing
// and loopback live mode.
#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "sticky/driver.hpp"
#include "sticky/errors.hpp"
#include "sticky/event_log.hpp"
#include "sticky/gateway.hpp"
#include "sticky/node_server.hpp"
#include "sticky/report.hpp"
#include "sticky/ring.hpp"
#include "sticky/sim.hpp"
#include "sticky/workload.hpp"

namespace {

using namespace sticky;

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kInvalid = 2,
  kRuntime = 3,
  kPortInUse = 4,
  kAssertion = 5,
};

constexpr const char* kFooter = R"(Exit codes:
  0  success
  1  usage or I/O error
  2  parse or validation error (scenario, trace, report, assertion syntax)
  3  runtime error, including a conservation-law violation in a report
  4  a listen port is already in use
  5  a --assert check failed

Environment (live mode; each overrides the scenario's "live" block):
  STICKYSERVE_GATEWAY_ADDR     host:port of the gateway
  STICKYSERVE_ADMIN_ADDR       host:port of the admin HTTP endpoint
  STICKYSERVE_NODE_<ID>_ADDR   host:port of node <ID> (upper-cased, other chars as '_'))";

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct IoError : Error {
  using Error::Error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write '" + out + "'");
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

struct RunOptions {
  std::string out;
  std::string format = "text";
  std::string events;
  std::optional<std::uint64_t> seed;
  std::string health;
  std::string preset;
  std::string routing;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--out", o.out, "Write the report here instead of stdout");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"text", "structured"}));
  cmd->add_option("--events", o.events, "Also write the event log (JSON lines)");
  cmd->add_option("--seed", o.seed, "Override the scenario seed");
  cmd->add_option("--health-checks", o.health, "Override health checking")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--preset", o.preset, "Replace every node's cost model with a preset");
  cmd->add_option("--routing", o.routing, "Override the routing policy (sticky_consistent_hash|round_robin)");
}

Scenario load_with(const std::string& path, const RunOptions& o) {
  Scenario s = parse_scenario(read_file(path));
  if (o.seed) s.seed = *o.seed;
  if (!o.health.empty()) s.health.enabled = o.health == "on";
  if (!o.preset.empty()) s.apply_preset(o.preset);
  if (!o.routing.empty()) s.routing_policy = parse_routing_policy(o.routing);
  s.validate();
  return s;
}

void write_result(const SimResult& r, const RunOptions& o) {
  emit(o.format == "structured" ? to_structured(r.report) : to_text(r.report), o.out);
  if (!o.events.empty()) {
    std::ofstream f(o.events, std::ios::binary);
    if (!f) throw IoError("cannot write '" + o.events + "'");
    write_event_log(f, r.log);
  }
}

std::vector<TurnRequest> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_trace(in);
}

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

int cmd_ring_inspect(const std::string& path, std::size_t samples) {
  const Scenario s = parse_scenario(read_file(path));
  s.validate();
  const Ring ring = s.build_ring();
  std::cout << "members " << ring.members().size() << ", points " << ring.points().size()
            << ", vnodes/weight " << ring.vnodes_per_weight() << ", hash seed " << ring.hash_seed()
            << "\n";
  std::vector<SessionId> ids;
  for (std::size_t i = 0; i < samples; ++i) ids.emplace_back("probe-" + std::to_string(i));
  const auto shares = key_shares(ring, ids);
  std::cout << "node        weight   key share\n";
  for (const auto& m : ring.members()) {
    const auto it = shares.find(m.id);
    const double share = it == shares.end() ? 0.0 : it->second;
    std::printf("%-10s %7d %10.2f%%\n", m.id.value.c_str(), m.weight, 100.0 * share);
  }
  if (ring.members().size() < 2) return kOk;
  for (const auto& m : ring.members()) {
    const RemapReport rep = remove_node(ring, m.id, ids).second;
    std::printf("remove %-10s remaps %6.2f%% of %zu sessions\n", m.id.value.c_str(),
                100.0 * rep.fraction, rep.sampled_sessions);
  }
  return kOk;
}

int cmd_serve(const std::string& role, const std::string& path, const std::string& id) {
  const Scenario s = parse_scenario(read_file(path));
  s.validate();
  const LiveAddresses addr = resolve_live_addresses(s);
  std::vector<std::unique_ptr<NodeServer>> nodes;
  std::unique_ptr<Gateway> gateway;
  auto start_node = [&](const NodeId& nid) {
    const auto& [host, port] = addr.nodes.at(nid);
    nodes.push_back(std::make_unique<NodeServer>(s, nid, host, port));
    nodes.back()->start();
    std::cerr << "node " << nid << " listening on " << host << ":" << nodes.back()->port() << "\n";
  };
  if (role == "node") {
    if (id.empty()) throw CLI::ValidationError("serve node", "--id is required");
    start_node(NodeId(id));
  } else {
    if (role == "cluster")
      for (const auto& n : s.nodes) start_node(n.id);
    gateway = std::make_unique<Gateway>(s, addr.nodes, addr.gateway, addr.admin);
    gateway->start();
    std::cerr << "gateway listening on " << addr.gateway.first << ":" << gateway->port()
              << ", admin on " << addr.admin.first << ":" << gateway->admin_port() << "\n";
  }
  wait_for_signal();
  if (gateway) gateway->stop();
  for (auto& n : nodes) n->stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stickyserve: session-sticky, cache-aware inference gateway and simulator"};
  app.footer(kFooter);
  app.require_subcommand(1);

  std::string scenario_path, trace_path, report_a, report_b, role, node_id;
  std::vector<std::string> asserts;
  std::size_t samples = 10000;
  RunOptions ro;

  auto* validate = app.add_subcommand("validate", "Parse and validate a scenario");
  validate->add_option("scenario", scenario_path)->required();

  auto* simulate = app.add_subcommand("simulate", "Run the discrete-event simulator");
  simulate->add_option("scenario", scenario_path)->required();
  add_run_options(simulate, ro);

  auto* replay_cmd = app.add_subcommand("replay", "Simulate a recorded trace");
  replay_cmd->add_option("trace", trace_path)->required();
  replay_cmd->add_option("scenario", scenario_path)->required();
  add_run_options(replay_cmd, ro);

  auto* trace_cmd = app.add_subcommand("trace", "Write the scenario's generated trace");
  trace_cmd->add_option("scenario", scenario_path)->required();
  trace_cmd->add_option("--out", ro.out, "Output path (default stdout)");
  trace_cmd->add_option("--seed", ro.seed, "Override the scenario seed");

  auto* diff = app.add_subcommand("diff", "Compare two structured reports (a/b)");
  diff->add_option("report_a", report_a)->required();
  diff->add_option("report_b", report_b)->required();
  diff->add_option("--assert", asserts, "\"<key> ratio|a|b <op> <number>\" (repeatable)");
  diff->add_option("--format", ro.format)->check(CLI::IsMember({"text", "structured"}));
  diff->add_option("--out", ro.out, "Write the ratio table here");

  auto* ring_cmd = app.add_subcommand("ring", "Ring tools");
  auto* inspect = ring_cmd->add_subcommand("inspect", "Key shares and single-removal remap fractions");
  inspect->add_option("scenario", scenario_path)->required();
  inspect->add_option("--sessions", samples, "Sampled session ids");
  ring_cmd->require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "Run a live gateway, node, or both (cluster)");
  serve->add_option("role", role)->required()->check(CLI::IsMember({"gateway", "node", "cluster"}));
  serve->add_option("scenario", scenario_path)->required();
  serve->add_option("--id", node_id, "Node id (role node)");

  auto* drive_cmd = app.add_subcommand("drive", "Replay a trace against a running gateway");
  drive_cmd->add_option("trace", trace_path)->required();
  drive_cmd->add_option("scenario", scenario_path)->required();
  add_run_options(drive_cmd, ro);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) {
      const Scenario s = parse_scenario(read_file(scenario_path));
      s.validate();
      std::cout << "ok " << s.name << " " << s.digest() << "\n";
      return kOk;
    }
    if (*simulate) {
      write_result(run(load_with(scenario_path, ro)), ro);
      return kOk;
    }
    if (*replay_cmd) {
      const Scenario s = load_with(scenario_path, ro);
      write_result(replay(load_trace(trace_path), s), ro);
      return kOk;
    }
    if (*trace_cmd) {
      const Scenario s = load_with(scenario_path, ro);
      std::ostringstream os;
      write_trace(os, generate_trace(s.workload, s.duration_s, s.seed));
      emit(os.str(), ro.out);
      return kOk;
    }
    if (*diff) {
      const RunReport a = from_structured(read_file(report_a));
      const RunReport b = from_structured(read_file(report_b));
      std::vector<Assertion> checks;
      for (const auto& text : asserts) checks.push_back(parse_assertion(text));
      const auto rows = compare(a, b);
      emit(ro.format == "structured" ? ratio_table_structured(rows) : ratio_table_text(rows), ro.out);
      int rc = kOk;
      for (const auto& c : checks) {
        const std::string msg = check_assertion(c, rows);
        if (!msg.empty()) {
          std::cerr << msg << "\n";
          rc = kAssertion;
        }
      }
      return rc;
    }
    if (*inspect) return cmd_ring_inspect(scenario_path, samples);
    if (*serve) return cmd_serve(role, scenario_path, node_id);
    if (*drive_cmd) {
      const Scenario s = load_with(scenario_path, ro);
      write_result(drive(load_trace(trace_path), s, resolve_live_addresses(s).gateway), ro);
      return kOk;
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const PortInUseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPortInUse;
  } catch (const AssemblyError& e) {
    std::cerr << "error: conservation law '" << e.law() << "' violated: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
