#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sticky/cost_model.hpp"
#include "sticky/errors.hpp"
#include "sticky/report.hpp"

using namespace sticky;

namespace {

double sample_p99(const CostModel& m, int n) {
  Rng rng(2024);
  LatencySeries s{"tpot", {}};
  for (int i = 0; i < n; ++i) s.samples.push_back(decode_latency(m, 1, rng));
  return quantile(s, 0.99);
}

CostModel constant_stages(double asr, double tts, double playout) {
  CostModel m;
  m.endpoint_asr = Distribution::constant(asr);
  m.tts = Distribution::constant(tts);
  m.playout = Distribution::constant(playout);
  return m;
}

}  // namespace

TEST_CASE("prefill calibration") {
  const CostModel m;
  const double cold = prefill_latency(m, 2450);
  const double steady = prefill_latency(m, 128);
  CHECK(cold == doctest::Approx(450.065));
  CHECK(cold >= 445.0);
  CHECK(cold <= 455.0);
  CHECK(steady == doctest::Approx(23.5136));
  CHECK(steady >= 22.0);
  CHECK(steady <= 26.0);
  CHECK(std::abs(steady - 25.0) <= 2.0);
  CHECK(cold / steady > 18.0);
  CHECK(prefill_latency(m, 0) == 0.0);
  CostModel based;
  based.prefill_base_ms = 7.5;
  CHECK(prefill_latency(based, 0) == 7.5);
}

TEST_CASE("ttft adds the floor to prefill") {
  CostModel m;
  Rng rng(1);
  CHECK(ttft(m, prefill_latency(m, 128), rng) == doctest::Approx(403.5136));
  m.ttft_floor = Distribution::constant(0.0);
  CHECK(ttft(m, 450.0, rng) == 450.0);
  const CostModel d;
  const double gap = ttft(d, prefill_latency(d, 2450), rng) - ttft(d, prefill_latency(d, 128), rng);
  CHECK(gap == doctest::Approx(426.55).epsilon(1e-3));
}

TEST_CASE("ttfa sums the voice pipeline") {
  Rng rng(1);
  CHECK(ttfa(constant_stages(225, 150, 50), 500.0, rng).total_ms == doctest::Approx(925.0));
  CHECK(ttfa(constant_stages(0, 0, 0), 0.0, rng).total_ms == 0.0);
  // Default stages at a 500 ms median TTFT.
  const CostModel d;
  LatencySeries s{"ttfa", {}};
  for (int i = 0; i < 10000; ++i) s.samples.push_back(ttfa(d, 500.0, rng).total_ms);
  CHECK(quantile(s, 0.5) < 1000.0);
  CHECK(quantile(s, 0.5) == doctest::Approx(925.0).epsilon(0.02));
}

TEST_CASE("decode") {
  const CostModel m;
  Rng rng(3);
  CHECK(decode_latency(m, 0, rng) == 0.0);
  CHECK(decode_latency(m, 10, rng) > 0.0);
}

TEST_CASE("tpot presets hit their p99") {
  const auto [student, sp] = preset("student_300b");
  const auto [teacher, tp] = preset("teacher_405b");
  const double s99 = sample_p99(student, 100000);
  const double t99 = sample_p99(teacher, 100000);
  CHECK(s99 >= 105.9);
  CHECK(s99 <= 129.5);
  CHECK(t99 >= 239.9);
  CHECK(t99 <= 293.2);
  CHECK(tpot_for_p99(117.69).median() * std::exp(kTpotSigma * kZ99) == doctest::Approx(117.69));
}

TEST_CASE("preset table") {
  const auto [student, sp] = preset("student_300b");
  const auto [teacher, tp] = preset("teacher_405b");
  CHECK(sp.req_throughput == 14.31);
  CHECK(sp.in_tok_throughput == 2888.49);
  CHECK(sp.out_tok_throughput == 3050.76);
  CHECK(tp.req_throughput == 10.96);
  CHECK(tp.in_tok_throughput == 2211.29);
  CHECK(tp.out_tok_throughput == 2335.36);
  CHECK(sp.req_throughput / tp.req_throughput == doctest::Approx(1.306).epsilon(1e-3));
  CHECK(student.service_rate_reqs == 14.31);
  CHECK(teacher.service_rate_reqs == 10.96);
  CHECK(student == CostModel{});
  CHECK(preset_names() == std::vector<std::string>{"student_300b", "teacher_405b"});
  CHECK_THROWS_AS(preset("llama_7b"), ConfigError);
}

TEST_CASE("validation") {
  CostModel m;
  m.prefill_ms_per_token = 0.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.service_rate_reqs = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.prefill_base_ms = -0.1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  CHECK_THROWS_AS(tpot_for_p99(0.0), ConfigError);
}

TEST_CASE("draw_turn is a pure function of its key") {
  const CostModel m;
  const auto a = draw_turn(m, 7, SessionId("s"), 3, 40);
  const auto b = draw_turn(m, 7, SessionId("s"), 3, 40);
  CHECK(a.tpot_us == b.tpot_us);
  CHECK(a.tts_us == b.tts_us);
  CHECK(a.tpot_us.size() == 40);
  CHECK(a.ttft_floor_us == 380000);
  CHECK(a.playout_us == 50000);
  CHECK(a.endpoint_asr_us >= 150000);
  CHECK(a.endpoint_asr_us <= 300000);
  CHECK(draw_turn(m, 8, SessionId("s"), 3, 40).tpot_us != a.tpot_us);
  CHECK(draw_turn(m, 7, SessionId("s"), 4, 40).tpot_us != a.tpot_us);
}

TEST_CASE("distributions") {
  CHECK(Distribution::lognormal(2450, 0.1).median() == 2450);
  CHECK(Distribution::lognormal(2450, 0.1).mean() == doctest::Approx(2450 * std::exp(0.005)));
  CHECK(Distribution::geometric(50, 75).mean() == 75);
  CHECK(Distribution::uniform(150, 300).mean() == 225);
  CHECK_THROWS_AS(Distribution::uniform(3, 1), ConfigError);
  CHECK_THROWS_AS(Distribution::lognormal(0, 1), ConfigError);
  CHECK_THROWS_AS(Distribution::lognormal(1, -1), ConfigError);
  CHECK_THROWS_AS(Distribution::geometric(5, 4), ConfigError);
  CHECK_THROWS_AS(Distribution::constant(-1), ConfigError);
  Rng rng(5);
  const auto geo = Distribution::geometric(3, 7);
  double total = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto v = geo.sample_count(rng);
    CHECK(v >= 3);
    total += static_cast<double>(v);
  }
  CHECK(total / 20000 == doctest::Approx(7.0).epsilon(0.03));
  CHECK(to_us(1.2345) == 1235);
}
