#include "sticky/cost_model.hpp"

#include <cmath>
#include <numeric>

#include "sticky/errors.hpp"

namespace sticky {

void CostModel::validate() const {
  if (!(prefill_base_ms >= 0.0)) throw ConfigError("cost.prefill_base_ms must be >= 0");
  if (!(prefill_ms_per_token > 0.0)) throw ConfigError("cost.prefill_ms_per_token must be > 0");
  if (!(service_rate_reqs > 0.0)) throw ConfigError("cost.service_rate_reqs must be > 0");
}

Distribution tpot_for_p99(double p99_ms, double sigma) {
  return Distribution::lognormal(p99_ms / std::exp(sigma * kZ99), sigma);
}

std::vector<std::string> preset_names() { return {"student_300b", "teacher_405b"}; }

std::pair<CostModel, CostPreset> preset(std::string_view name) {
  CostPreset p;
  if (name == "student_300b") {
    p = {"student_300b", 14.31, 2888.49, 3050.76, 117.69};
  } else if (name == "teacher_405b") {
    p = {"teacher_405b", 10.96, 2211.29, 2335.36, 266.51};
  } else {
    throw ConfigError("unknown cost preset '" + std::string(name) +
                      "' (expected student_300b or teacher_405b)");
  }
  CostModel m;
  m.tpot = tpot_for_p99(p.tpot_p99_ms);
  m.service_rate_reqs = p.req_throughput;
  return {m, p};
}

double prefill_latency(const CostModel& m, std::int64_t uncached_tokens) {
  return m.prefill_base_ms + m.prefill_ms_per_token * static_cast<double>(uncached_tokens);
}

double decode_latency(const CostModel& m, std::int64_t output_tokens, Rng& rng) {
  double total = 0.0;
  for (std::int64_t i = 0; i < output_tokens; ++i) total += m.tpot.sample(rng);
  return total;
}

double ttft(const CostModel& m, double prefill_ms, Rng& rng) {
  return m.ttft_floor.sample(rng) + prefill_ms;
}

TtfaBreakdown ttfa(const CostModel& m, double ttft_ms, Rng& rng) {
  TtfaBreakdown b;
  b.endpoint_asr_ms = m.endpoint_asr.sample(rng);
  b.ttft_ms = ttft_ms;
  b.tts_ms = m.tts.sample(rng);
  b.playout_ms = m.playout.sample(rng);
  b.total_ms = b.endpoint_asr_ms + b.ttft_ms + b.tts_ms + b.playout_ms;
  return b;
}

std::int64_t TurnDraws::decode_us() const {
  return std::accumulate(tpot_us.begin(), tpot_us.end(), std::int64_t{0});
}

TurnDraws draw_turn(const CostModel& m, std::uint64_t seed, const SessionId& session,
                    int turn_index, std::int64_t output_tokens) {
  Rng rng = make_stream(seed, "turn", session.value + "#" + std::to_string(turn_index));
  TurnDraws d;
  d.ttft_floor_us = to_us(m.ttft_floor.sample(rng));
  d.tpot_us.reserve(static_cast<std::size_t>(output_tokens));
  for (std::int64_t i = 0; i < output_tokens; ++i) d.tpot_us.push_back(to_us(m.tpot.sample(rng)));
  d.endpoint_asr_us = to_us(m.endpoint_asr.sample(rng));
  d.tts_us = to_us(m.tts.sample(rng));
  d.playout_us = to_us(m.playout.sample(rng));
  return d;
}

}  // namespace sticky
