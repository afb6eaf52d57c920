#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sticky/cost_model.hpp"
#include "sticky/health.hpp"
#include "sticky/ids.hpp"
#include "sticky/ring.hpp"
#include "sticky/workload.hpp"

namespace sticky {

enum class RoutingPolicy { StickyConsistentHash, RoundRobin };

std::string_view to_string(RoutingPolicy p);
// Throws ConfigError.
RoutingPolicy parse_routing_policy(std::string_view s);

struct NodeSpec {
  NodeId id;
  int weight = 1;
  std::int64_t capacity_tokens = 4'000'000;
  CostModel cost;
  // Simulated health-probe round trip of a live node.
  double probe_latency_ms = 1.0;
};

struct Fault {
  NodeId node;
  std::int64_t fail_at_ms = 0;
  std::optional<std::int64_t> recover_at_ms;
};

// Loopback addresses for live mode ("host:port").
struct LiveConfig {
  std::string gateway = "127.0.0.1:7400";
  std::string admin = "127.0.0.1:7401";
  std::map<NodeId, std::string> nodes;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration_s = 60.0;
  RoutingPolicy routing_policy = RoutingPolicy::StickyConsistentHash;
  std::int64_t request_timeout_ms = 10'000;
  int vnodes_per_weight = kDefaultVnodesPerWeight;
  std::uint64_t hash_seed = 0;
  std::vector<NodeSpec> nodes;
  HealthConfig health;
  WorkloadMix workload;
  std::vector<Fault> faults;
  LiveConfig live;

  // Throws ConfigError.
  void validate() const;

  Ring build_ring() const;
  const NodeSpec& node(const NodeId& id) const;

  // Replaces every node's cost model with the named preset.
  void apply_preset(std::string_view preset_name);

  // Canonical fully-resolved document; stable across runs.
  std::string canonical() const;
  // hex64(hash64(canonical(), 0)).
  std::string digest() const;
};

// Strict: unknown keys and ill-typed values are rejected. Throws ParseError
// carrying the line/column of the offending token when it can be located.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

// "host:port" -> (host, port). Throws ConfigError.
std::pair<std::string, std::uint16_t> split_address(const std::string& addr);

}  // namespace sticky
