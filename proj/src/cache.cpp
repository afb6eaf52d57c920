#include "sticky/cache.hpp"

#include <algorithm>
#include <string>

#include "sticky/errors.hpp"

namespace sticky {

CacheCounters& CacheCounters::operator+=(const CacheCounters& o) {
  lookups += o.lookups;
  cold_lookups += o.cold_lookups;
  hit_tokens += o.hit_tokens;
  miss_tokens += o.miss_tokens;
  cold_miss_tokens += o.cold_miss_tokens;
  evicted_entries += o.evicted_entries;
  evicted_tokens += o.evicted_tokens;
  committed_tokens += o.committed_tokens;
  return *this;
}

NodeCache::NodeCache(std::int64_t capacity_tokens) : capacity_(capacity_tokens) {
  if (capacity_tokens <= 0) throw ConfigError("cache capacity_tokens must be > 0");
}

void NodeCache::touch(Entry& e, std::int64_t now) {
  e.last_access = now;
  lru_.splice(lru_.begin(), lru_, e.lru_pos);
}

CacheOutcome NodeCache::lookup(const SessionId& session, std::int64_t required,
                               std::int64_t now) {
  if (required < 0) throw CacheError("lookup: required_context_tokens must be >= 0");
  CacheOutcome out;
  auto it = entries_.find(session);
  if (it != entries_.end()) {
    out.hit_tokens = std::min(it->second.cached_prefix_tokens, required);
    touch(it->second, now);
  }
  out.miss_tokens = required - out.hit_tokens;
  out.cold_start = out.hit_tokens == 0 && required > 0;

  ++counters_.lookups;
  counters_.hit_tokens += out.hit_tokens;
  counters_.miss_tokens += out.miss_tokens;
  if (out.cold_start) {
    ++counters_.cold_lookups;
    counters_.cold_miss_tokens += out.miss_tokens;
  }
  return out;
}

std::vector<Eviction> NodeCache::commit(const SessionId& session, std::int64_t new_total,
                                        std::int64_t now) {
  if (new_total > capacity_)
    throw CacheError("entry exceeds capacity: session '" + session.value + "' needs " +
                     std::to_string(new_total) + " tokens, capacity " +
                     std::to_string(capacity_));
  auto it = entries_.find(session);
  const std::int64_t current = it == entries_.end() ? 0 : it->second.cached_prefix_tokens;
  if (new_total < current)
    throw CacheError("commit: history of session '" + session.value + "' shrank from " +
                     std::to_string(current) + " to " + std::to_string(new_total));

  if (it == entries_.end()) {
    lru_.push_front(session);
    it = entries_.emplace(session, Entry{0, now, lru_.begin()}).first;
  } else {
    touch(it->second, now);
  }
  it->second.cached_prefix_tokens = new_total;
  it->second.last_access = now;
  resident_ += new_total - current;
  counters_.committed_tokens += new_total - current;

  std::vector<Eviction> evicted;
  while (resident_ > capacity_) {
    const SessionId victim = lru_.back();  // never `session`: it sits at the front
    auto vit = entries_.find(victim);
    const std::int64_t tokens = vit->second.cached_prefix_tokens;
    resident_ -= tokens;
    ++counters_.evicted_entries;
    counters_.evicted_tokens += tokens;
    lru_.pop_back();
    entries_.erase(vit);
    evicted.push_back({victim, tokens});
  }
  return evicted;
}

void NodeCache::clear() {
  entries_.clear();
  lru_.clear();
  resident_ = 0;
}

std::int64_t NodeCache::cached_prefix(const SessionId& session) const {
  auto it = entries_.find(session);
  return it == entries_.end() ? 0 : it->second.cached_prefix_tokens;
}

std::vector<SessionId> NodeCache::lru_order() const { return {lru_.rbegin(), lru_.rend()}; }

CacheMetrics cache_metrics(const CacheCounters& c) {
  if (c.lookups == 0) throw CacheError("cache_metrics: no lookups recorded");
  CacheMetrics m;
  m.lookups = c.lookups;
  m.hit_tokens = c.hit_tokens;
  m.miss_tokens = c.miss_tokens;
  const std::int64_t total = c.hit_tokens + c.miss_tokens;
  m.chr = total == 0 ? 0.0 : static_cast<double>(c.hit_tokens) / static_cast<double>(total);
  if (c.miss_tokens > 0)
    m.reuse_factor = static_cast<double>(c.hit_tokens) / static_cast<double>(c.miss_tokens);
  m.avg_recomputed_tokens = static_cast<double>(c.miss_tokens) / static_cast<double>(c.lookups);
  if (c.cold_lookups > 0)
    m.avg_recomputed_cold =
        static_cast<double>(c.cold_miss_tokens) / static_cast<double>(c.cold_lookups);
  if (c.lookups > c.cold_lookups)
    m.avg_recomputed_steady = static_cast<double>(c.miss_tokens - c.cold_miss_tokens) /
                              static_cast<double>(c.lookups - c.cold_lookups);
  m.evicted_tokens = c.evicted_tokens;
  m.committed_tokens = c.committed_tokens;
  if (c.committed_tokens > 0)
    m.eviction_rate =
        static_cast<double>(c.evicted_tokens) / static_cast<double>(c.committed_tokens);
  return m;
}

CacheMetrics cache_metrics(std::span<const NodeCache> caches) {
  CacheCounters total;
  for (const auto& c : caches) total += c.counters();
  return cache_metrics(total);
}

}  // namespace sticky
