#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace sticky {

using Rng = std::mt19937_64;

// Independent stream for (purpose, entity) under a run seed. Adding a new
// stream never perturbs existing ones.
Rng make_stream(std::uint64_t seed, std::string_view purpose, std::string_view entity);

// Parametric distribution over non-negative values. Lognormal is
// parametrized by its median so configs can quote reported medians directly.
class Distribution {
 public:
  enum class Kind { Constant, Uniform, Lognormal, Geometric };

  static Distribution constant(double value);
  static Distribution uniform(double lo, double hi);
  static Distribution lognormal(double median, double sigma);
  // Shifted geometric on {min, min+1, ...} with the given mean.
  static Distribution geometric(double min, double mean);

  Distribution() : Distribution(constant(0.0)) {}

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }

  double sample(Rng& rng) const;
  // Non-negative integer sample (rounded to nearest).
  std::int64_t sample_count(Rng& rng) const;
  double median() const;
  double mean() const;

  std::string describe() const;
  bool operator==(const Distribution&) const = default;

 private:
  Distribution(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}

  Kind kind_;
  double a_;
  double b_;
};

std::string_view to_string(Distribution::Kind k);

// Milliseconds to the integer microsecond time base.
std::int64_t to_us(double ms);

}  // namespace sticky
