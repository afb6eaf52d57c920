#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sticky/distribution.hpp"
#include "sticky/ids.hpp"

namespace sticky {

inline constexpr double kDefaultPrefillMsPerToken = 0.1837;  // ~450 ms over 2450 tokens
inline constexpr double kDefaultTtftFloorMs = 380.0;
inline constexpr double kTpotSigma = 0.5;
inline constexpr double kZ99 = 2.3263478740408408;  // standard normal 0.99 quantile

// Lognormal TPOT whose 0.99 quantile equals p99_ms.
Distribution tpot_for_p99(double p99_ms, double sigma = kTpotSigma);

// Latency and throughput parameters of one inference node. Defaults are the
// student_300b calibration.
struct CostModel {
  double prefill_base_ms = 0.0;
  double prefill_ms_per_token = kDefaultPrefillMsPerToken;
  // Fixed first-token overhead on top of prefill.
  Distribution ttft_floor = Distribution::constant(kDefaultTtftFloorMs);
  Distribution tpot = tpot_for_p99(117.69);
  // Speech pipeline stages around the LLM.
  Distribution endpoint_asr = Distribution::uniform(150.0, 300.0);
  Distribution tts = Distribution::uniform(100.0, 200.0);
  Distribution playout = Distribution::constant(50.0);
  // Admission rate cap per node.
  double service_rate_reqs = 14.31;

  void validate() const;
  bool operator==(const CostModel&) const = default;
};

struct CostPreset {
  std::string name;
  double req_throughput = 0.0;
  double in_tok_throughput = 0.0;
  double out_tok_throughput = 0.0;
  double tpot_p99_ms = 0.0;
};

std::vector<std::string> preset_names();

// Throws ConfigError for an unknown name.
std::pair<CostModel, CostPreset> preset(std::string_view name);

double prefill_latency(const CostModel& m, std::int64_t uncached_tokens);
double decode_latency(const CostModel& m, std::int64_t output_tokens, Rng& rng);
double ttft(const CostModel& m, double prefill_ms, Rng& rng);

struct TtfaBreakdown {
  double endpoint_asr_ms = 0.0;
  double ttft_ms = 0.0;
  double tts_ms = 0.0;
  double playout_ms = 0.0;
  double total_ms = 0.0;
};

// total = endpoint/ASR + TTFT + TTS first audio + playout.
TtfaBreakdown ttfa(const CostModel& m, double ttft_ms, Rng& rng);

// All random draws of one turn, in microseconds. Sampled from the
// ("turn", "<session>#<turn_index>") stream in a fixed order, so the
// simulator and a live stub node produce identical values.
struct TurnDraws {
  std::int64_t ttft_floor_us = 0;
  std::vector<std::int64_t> tpot_us;
  std::int64_t endpoint_asr_us = 0;
  std::int64_t tts_us = 0;
  std::int64_t playout_us = 0;

  std::int64_t decode_us() const;
};

TurnDraws draw_turn(const CostModel& m, std::uint64_t seed, const SessionId& session,
                    int turn_index, std::int64_t output_tokens);

}  // namespace sticky
