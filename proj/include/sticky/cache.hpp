#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "sticky/ids.hpp"

namespace sticky {

struct CacheOutcome {
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  bool cold_start = false;

  bool operator==(const CacheOutcome&) const = default;
};

struct CacheCounters {
  std::int64_t lookups = 0;
  std::int64_t cold_lookups = 0;
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  std::int64_t cold_miss_tokens = 0;
  std::int64_t evicted_entries = 0;
  std::int64_t evicted_tokens = 0;
  std::int64_t committed_tokens = 0;

  CacheCounters& operator+=(const CacheCounters& o);
  bool operator==(const CacheCounters&) const = default;
};

struct Eviction {
  SessionId session;
  std::int64_t tokens = 0;

  bool operator==(const Eviction&) const = default;
};

// Prefix-cache state of one inference node, accounted in context tokens.
// Each session holds one entry: the length of its cached history prefix.
// Capacity is enforced by strict LRU over lookup and commit accesses.
class NodeCache {
 public:
  explicit NodeCache(std::int64_t capacity_tokens);

  // hit = min(cached prefix, required); refreshes the entry's LRU position.
  CacheOutcome lookup(const SessionId& session, std::int64_t required_context_tokens,
                      std::int64_t now);

  // Upserts the session's cached prefix to new_total and evicts least
  // recently used other entries until the cache fits. Throws CacheError
  // (cache unchanged) if new_total alone exceeds capacity or is shorter
  // than the currently cached prefix.
  std::vector<Eviction> commit(const SessionId& session, std::int64_t new_total_context_tokens,
                               std::int64_t now);

  // Drops all entries (node restart). Counters are kept.
  void clear();

  std::int64_t cached_prefix(const SessionId& session) const;
  std::int64_t resident_tokens() const { return resident_; }
  std::int64_t capacity_tokens() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  const CacheCounters& counters() const { return counters_; }

  // Least recently used first.
  std::vector<SessionId> lru_order() const;

 private:
  struct Entry {
    std::int64_t cached_prefix_tokens = 0;
    std::int64_t last_access = 0;
    std::list<SessionId>::iterator lru_pos;
  };

  void touch(Entry& e, std::int64_t now);

  std::int64_t capacity_;
  std::int64_t resident_ = 0;
  std::list<SessionId> lru_;  // front = most recent
  std::unordered_map<SessionId, Entry> entries_;
  CacheCounters counters_;
};

struct CacheMetrics {
  std::int64_t lookups = 0;
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  // hits / (hits + misses); 0 when no tokens were requested.
  double chr = 0.0;
  // hits / misses; empty when misses == 0 ("all-hit").
  std::optional<double> reuse_factor;
  double avg_recomputed_tokens = 0.0;
  std::optional<double> avg_recomputed_cold;
  std::optional<double> avg_recomputed_steady;
  std::int64_t evicted_tokens = 0;
  std::int64_t committed_tokens = 0;
  // evicted / committed; empty when nothing was committed.
  std::optional<double> eviction_rate;
};

// Throws CacheError when no lookup was recorded.
CacheMetrics cache_metrics(const CacheCounters& counters);
CacheMetrics cache_metrics(std::span<const NodeCache> caches);

}  // namespace sticky
