#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "sticky/ids.hpp"

namespace sticky {

inline constexpr int kDefaultVnodesPerWeight = 128;

struct Member {
  NodeId id;
  int weight = 1;

  bool operator==(const Member&) const = default;
};

struct RingPoint {
  std::uint64_t point = 0;
  NodeId owner;

  bool operator==(const RingPoint&) const = default;
};

// Consistent-hash ring. Each member owns weight * vnodes_per_weight points at
// hash64("<node_id>#<replica>", hash_seed); a session routes to the owner of
// the first point >= hash64(session_id, hash_seed), wrapping past the top.
// Equal points are ordered by node id, so the lexicographically smaller id
// wins a collision.
//
// Values are immutable; membership changes produce a new ring.
class Ring {
 public:
  // Empty ring: every route() throws NoCapacityError.
  Ring() = default;

  // Throws ConfigError on empty members, duplicate ids, weight < 1 or
  // vnodes_per_weight < 1.
  static Ring build(std::vector<Member> members,
                    int vnodes_per_weight = kDefaultVnodesPerWeight,
                    std::uint64_t hash_seed = 0);

  NodeId route(const SessionId& session) const;

  bool empty() const { return members_.empty(); }
  bool contains(const NodeId& node) const;

  // Members sorted by id.
  const std::vector<Member>& members() const { return members_; }
  const std::vector<RingPoint>& points() const { return points_; }
  int vnodes_per_weight() const { return vnodes_per_weight_; }
  std::uint64_t hash_seed() const { return hash_seed_; }

  // Same ring without `node` (possibly empty). Points of the other members
  // are untouched.
  Ring without(const NodeId& node) const;

 private:
  Ring(std::vector<Member> members, int vnodes, std::uint64_t seed);

  std::vector<Member> members_;
  std::vector<RingPoint> points_;
  int vnodes_per_weight_ = kDefaultVnodesPerWeight;
  std::uint64_t hash_seed_ = 0;
};

struct RemapReport {
  std::size_t sampled_sessions = 0;
  std::size_t remapped = 0;
  double fraction = 0.0;
};

RemapReport measure_remap(const Ring& before, const Ring& after,
                          std::span<const SessionId> sample);

// Throws RoutingError for an unknown node or when removing the last member;
// the input ring is never modified.
std::pair<Ring, RemapReport> remove_node(const Ring& ring, const NodeId& node,
                                         std::span<const SessionId> sample);

// Throws RoutingError for a duplicate node and ConfigError for weight < 1.
std::pair<Ring, RemapReport> add_node(const Ring& ring, const NodeId& node, int weight,
                                      std::span<const SessionId> sample);

// Fraction of `sample` routed to each member (members with no keys report 0).
std::map<NodeId, double> key_shares(const Ring& ring, std::span<const SessionId> sample);

}  // namespace sticky
