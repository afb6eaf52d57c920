#include "sticky/distribution.hpp"

#include <cmath>
#include <sstream>

#include "sticky/errors.hpp"
#include "sticky/hash.hpp"

namespace sticky {

Rng make_stream(std::uint64_t seed, std::string_view purpose, std::string_view entity) {
  return Rng(stream_seed(seed, purpose, entity));
}

Distribution Distribution::constant(double value) {
  if (!(value >= 0.0) || !std::isfinite(value))
    throw ConfigError("constant distribution: value must be finite and >= 0");
  return {Kind::Constant, value, 0.0};
}

Distribution Distribution::uniform(double lo, double hi) {
  if (!(lo >= 0.0) || !(hi > lo) || !std::isfinite(hi))
    throw ConfigError("uniform distribution: need 0 <= lo < hi");
  return {Kind::Uniform, lo, hi};
}

Distribution Distribution::lognormal(double median, double sigma) {
  if (!(median > 0.0) || !(sigma >= 0.0) || !std::isfinite(median) || !std::isfinite(sigma))
    throw ConfigError("lognormal distribution: need median > 0 and sigma >= 0");
  return {Kind::Lognormal, median, sigma};
}

Distribution Distribution::geometric(double min, double mean) {
  if (!(min >= 0.0) || !(mean >= min) || !std::isfinite(mean))
    throw ConfigError("geometric distribution: need 0 <= min <= mean");
  return {Kind::Geometric, std::round(min), mean};
}

double Distribution::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::Constant:
      return a_;
    case Kind::Uniform:
      return std::uniform_real_distribution<double>(a_, b_)(rng);
    case Kind::Lognormal:
      return a_ * std::exp(b_ * std::normal_distribution<double>(0.0, 1.0)(rng));
    case Kind::Geometric: {
      if (b_ <= a_) return a_;
      const double p = 1.0 / (b_ - a_ + 1.0);
      return a_ + static_cast<double>(std::geometric_distribution<std::int64_t>(p)(rng));
    }
  }
  return 0.0;
}

std::int64_t Distribution::sample_count(Rng& rng) const {
  const long long v = std::llround(sample(rng));
  return v < 0 ? 0 : static_cast<std::int64_t>(v);
}

double Distribution::median() const {
  switch (kind_) {
    case Kind::Constant: return a_;
    case Kind::Uniform: return 0.5 * (a_ + b_);
    case Kind::Lognormal: return a_;
    case Kind::Geometric: {
      if (b_ <= a_) return a_;
      // Smallest k with P(K <= k) >= 1/2 where P(K <= k) = 1 - (1-p)^(k+1).
      const double q = 1.0 - 1.0 / (b_ - a_ + 1.0);
      return a_ + std::max(0.0, std::ceil(std::log(0.5) / std::log(q)) - 1.0);
    }
  }
  return 0.0;
}

double Distribution::mean() const {
  switch (kind_) {
    case Kind::Constant: return a_;
    case Kind::Uniform: return 0.5 * (a_ + b_);
    case Kind::Lognormal: return a_ * std::exp(0.5 * b_ * b_);
    case Kind::Geometric: return b_;
  }
  return 0.0;
}

std::string_view to_string(Distribution::Kind k) {
  switch (k) {
    case Distribution::Kind::Constant: return "constant";
    case Distribution::Kind::Uniform: return "uniform";
    case Distribution::Kind::Lognormal: return "lognormal";
    case Distribution::Kind::Geometric: return "geometric";
  }
  return "?";
}

std::string Distribution::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  switch (kind_) {
    case Kind::Constant: os << "(" << a_ << ")"; break;
    case Kind::Uniform: os << "(" << a_ << ", " << b_ << ")"; break;
    case Kind::Lognormal: os << "(median=" << a_ << ", sigma=" << b_ << ")"; break;
    case Kind::Geometric: os << "(min=" << a_ << ", mean=" << b_ << ")"; break;
  }
  return os.str();
}

std::int64_t to_us(double ms) { return std::llround(ms * 1000.0); }

}  // namespace sticky
