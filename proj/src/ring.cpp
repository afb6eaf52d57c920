#include "sticky/ring.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "sticky/errors.hpp"
#include "sticky/hash.hpp"

namespace sticky {

Ring Ring::build(std::vector<Member> members, int vnodes_per_weight, std::uint64_t hash_seed) {
  if (members.empty()) throw ConfigError("ring: member list is empty");
  if (vnodes_per_weight < 1) throw ConfigError("ring: vnodes_per_weight must be >= 1");
  std::set<NodeId> seen;
  for (const auto& m : members) {
    if (m.id.value.empty()) throw ConfigError("ring: node id must be non-empty");
    if (m.weight < 1) throw ConfigError("ring: weight of '" + m.id.value + "' must be >= 1");
    if (!seen.insert(m.id).second) throw ConfigError("ring: duplicate node id '" + m.id.value + "'");
  }
  return Ring(std::move(members), vnodes_per_weight, hash_seed);
}

Ring::Ring(std::vector<Member> members, int vnodes, std::uint64_t seed)
    : members_(std::move(members)), vnodes_per_weight_(vnodes), hash_seed_(seed) {
  std::sort(members_.begin(), members_.end(),
            [](const Member& a, const Member& b) { return a.id < b.id; });
  std::size_t total = 0;
  for (const auto& m : members_) total += static_cast<std::size_t>(m.weight) * vnodes;
  points_.reserve(total);
  for (const auto& m : members_) {
    const int replicas = m.weight * vnodes;
    for (int r = 0; r < replicas; ++r) {
      const std::string key = m.id.value + "#" + std::to_string(r);
      points_.push_back({hash64(key, hash_seed_), m.id});
    }
  }
  std::sort(points_.begin(), points_.end(), [](const RingPoint& a, const RingPoint& b) {
    return a.point != b.point ? a.point < b.point : a.owner < b.owner;
  });
}

NodeId Ring::route(const SessionId& session) const {
  if (points_.empty()) throw NoCapacityError();
  const std::uint64_t h = hash64(session.value, hash_seed_);
  auto it = std::lower_bound(points_.begin(), points_.end(), h,
                             [](const RingPoint& p, std::uint64_t v) { return p.point < v; });
  if (it == points_.end()) it = points_.begin();
  return it->owner;
}

bool Ring::contains(const NodeId& node) const {
  return std::any_of(members_.begin(), members_.end(),
                     [&](const Member& m) { return m.id == node; });
}

Ring Ring::without(const NodeId& node) const {
  Ring out;
  out.vnodes_per_weight_ = vnodes_per_weight_;
  out.hash_seed_ = hash_seed_;
  for (const auto& m : members_)
    if (m.id != node) out.members_.push_back(m);
  out.points_.reserve(points_.size());
  for (const auto& p : points_)
    if (p.owner != node) out.points_.push_back(p);
  return out;
}

RemapReport measure_remap(const Ring& before, const Ring& after,
                          std::span<const SessionId> sample) {
  RemapReport r;
  r.sampled_sessions = sample.size();
  for (const auto& s : sample)
    if (before.route(s) != after.route(s)) ++r.remapped;
  r.fraction = sample.empty() ? 0.0 : static_cast<double>(r.remapped) / sample.size();
  return r;
}

std::pair<Ring, RemapReport> remove_node(const Ring& ring, const NodeId& node,
                                         std::span<const SessionId> sample) {
  if (!ring.contains(node)) throw RoutingError("remove_node: unknown node '" + node.value + "'");
  if (ring.members().size() == 1)
    throw RoutingError("remove_node: cannot remove the last member '" + node.value + "'");
  Ring after = ring.without(node);
  RemapReport report = measure_remap(ring, after, sample);
  return {std::move(after), report};
}

std::pair<Ring, RemapReport> add_node(const Ring& ring, const NodeId& node, int weight,
                                      std::span<const SessionId> sample) {
  if (weight < 1) throw ConfigError("add_node: weight must be >= 1");
  if (ring.contains(node)) throw RoutingError("add_node: duplicate node '" + node.value + "'");
  std::vector<Member> members = ring.members();
  members.push_back({node, weight});
  Ring after = Ring::build(std::move(members), ring.vnodes_per_weight(), ring.hash_seed());
  RemapReport report = ring.empty() ? RemapReport{sample.size(), sample.size(), 1.0}
                                    : measure_remap(ring, after, sample);
  return {std::move(after), report};
}

std::map<NodeId, double> key_shares(const Ring& ring, std::span<const SessionId> sample) {
  std::map<NodeId, double> shares;
  for (const auto& m : ring.members()) shares[m.id] = 0.0;
  if (sample.empty()) return shares;
  for (const auto& s : sample) shares[ring.route(s)] += 1.0;
  for (auto& [_, v] : shares) v /= static_cast<double>(sample.size());
  return shares;
}

}  // namespace sticky
