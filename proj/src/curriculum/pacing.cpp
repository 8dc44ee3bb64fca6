#include "mexit/pacing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mexit/error.hpp"

namespace mexit {

namespace {

constexpr std::array<std::pair<PacingKind, std::string_view>, 8> kPacingNames{{
    {PacingKind::linear, "linear"},
    {PacingKind::root, "root"},
    {PacingKind::root_p, "root_p"},
    {PacingKind::geometric, "geometric"},
    {PacingKind::fixed_exponential, "fixed_exponential"},
    {PacingKind::single_step, "single_step"},
    {PacingKind::baby_step, "baby_step"},
    {PacingKind::one_pass, "one_pass"},
}};

bool is_continuous(PacingKind k) {
  return k == PacingKind::linear || k == PacingKind::root || k == PacingKind::root_p || k == PacingKind::geometric;
}

bool is_bucketed(PacingKind k) { return k == PacingKind::baby_step || k == PacingKind::one_pass; }

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("invalid pacing config: " + what);
}

}  // namespace

std::string_view to_string(PacingKind kind) {
  for (const auto& [k, name] : kPacingNames)
    if (k == kind) return name;
  return "unknown";
}

PacingKind pacing_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kPacingNames)
    if (n == name) return k;
  if (name == "fep") return PacingKind::fixed_exponential;
  if (name == "ssp") return PacingKind::single_step;
  throw InvalidArgument("unknown pacing kind '" + std::string(name) + "'");
}

PacingConfig PacingConfig::fixed_exponential(double s, double r, std::size_t delta) {
  PacingConfig c;
  c.kind = PacingKind::fixed_exponential;
  c.start = s;
  c.growth = r;
  c.step = delta;
  return c;
}

PacingConfig PacingConfig::single_step(double s, std::size_t delta) {
  PacingConfig c;
  c.kind = PacingKind::single_step;
  c.start = s;
  c.step = delta;
  return c;
}

PacingConfig PacingConfig::continuous(PacingKind kind, double lambda0, double full_at, double exponent) {
  PacingConfig c;
  c.kind = kind;
  c.start = lambda0;
  c.full_at = full_at;
  c.exponent = exponent;
  return c;
}

PacingConfig PacingConfig::bucketed(PacingKind kind, std::size_t buckets, std::size_t batches_per_bucket) {
  PacingConfig c;
  c.kind = kind;
  c.buckets = buckets;
  c.step = batches_per_bucket;
  return c;
}

PacingFunction::PacingFunction(PacingConfig config) : config_(config) {
  const PacingConfig& c = config_;
  if (is_continuous(c.kind)) {
    require(c.start > 0.0 && c.start <= 1.0, "lambda_0 must be in (0,1]");
    require(c.full_at >= 1.0 && std::isfinite(c.full_at), "T_f must be >= 1");
    if (c.kind == PacingKind::root_p) require(c.exponent >= 1.0 && std::isfinite(c.exponent), "p must be >= 1");
    saturation_ = c.start == 1.0 ? 0 : static_cast<std::size_t>(std::ceil(c.full_at));
  } else if (c.kind == PacingKind::fixed_exponential) {
    require(c.start > 0.0 && c.start <= 1.0, "s must be in (0,1]");
    require(c.growth > 1.0 && std::isfinite(c.growth), "r must be > 1");
    require(c.step >= 1, "delta must be >= 1");
    std::size_t k = 0;
    while (c.start * std::pow(c.growth, static_cast<double>(k)) < 1.0) ++k;
    saturation_ = k * c.step;
  } else if (c.kind == PacingKind::single_step) {
    require(c.start > 0.0 && c.start <= 1.0, "s must be in (0,1]");
    require(c.step >= 1, "delta must be >= 1");
    saturation_ = c.start == 1.0 ? 0 : c.step;
  } else {
    require(c.buckets >= 1, "bucket count must be >= 1");
    require(c.step >= 1, "batches per bucket must be >= 1");
    saturation_ = (c.buckets - 1) * c.step;
  }
}

double PacingFunction::operator()(std::size_t t) const {
  const PacingConfig& c = config_;
  const double td = static_cast<double>(t);
  switch (c.kind) {
    case PacingKind::linear:
      if (td >= c.full_at) return 1.0;
      return std::min(1.0, c.start + (1.0 - c.start) / c.full_at * td);
    case PacingKind::root: {
      if (td >= c.full_at) return 1.0;
      const double l2 = c.start * c.start;
      return std::min(1.0, std::sqrt(l2 + (1.0 - l2) / c.full_at * td));
    }
    case PacingKind::root_p: {
      if (td >= c.full_at) return 1.0;
      const double lp = std::pow(c.start, c.exponent);
      return std::min(1.0, std::pow(lp + (1.0 - lp) / c.full_at * td, 1.0 / c.exponent));
    }
    case PacingKind::geometric: {
      if (td >= c.full_at) return 1.0;
      const double l = std::log2(c.start);
      return std::min(1.0, std::exp2(l - l / c.full_at * td));
    }
    case PacingKind::fixed_exponential:
      return std::min(c.start * std::pow(c.growth, static_cast<double>(t / c.step)), 1.0);
    case PacingKind::single_step:
      return t < c.step ? c.start : 1.0;
    case PacingKind::baby_step:
      return std::min(1.0, static_cast<double>(bucket(t) + 1) / static_cast<double>(c.buckets));
    case PacingKind::one_pass:
      return 1.0 / static_cast<double>(c.buckets);
  }
  return 1.0;
}

std::optional<std::size_t> PacingFunction::saturation() const {
  if (config_.kind == PacingKind::one_pass) return std::nullopt;
  return saturation_;
}

std::size_t PacingFunction::bucket(std::size_t t) const {
  if (!is_bucketed(config_.kind)) return 0;
  return std::min(t / config_.step, config_.buckets - 1);
}

std::string PacingFunction::label() const {
  const PacingConfig& c = config_;
  std::ostringstream os;
  switch (c.kind) {
    case PacingKind::fixed_exponential: os << "FEP(" << c.step << ")"; break;
    case PacingKind::single_step: os << "SSP(" << c.step << ")"; break;
    case PacingKind::baby_step: os << "BS(" << c.buckets << "x" << c.step << ")"; break;
    case PacingKind::one_pass: os << "OP(" << c.buckets << "x" << c.step << ")"; break;
    case PacingKind::root_p: os << "root_p(" << c.start << "," << c.full_at << "," << c.exponent << ")"; break;
    default: os << to_string(c.kind) << "(" << c.start << "," << c.full_at << ")"; break;
  }
  return os.str();
}

IndexRange active_range(const PacingFunction& pacing, std::size_t t, std::size_t n, std::size_t batch_size) {
  if (n == 0) throw InvalidArgument("active_range needs a nonempty dataset");
  const PacingConfig& c = pacing.config();
  if (c.kind == PacingKind::one_pass) {
    const std::size_t k = pacing.bucket(t);
    std::size_t lo = k * n / c.buckets;
    std::size_t hi = (k + 1) * n / c.buckets;
    if (hi == lo) {  // more buckets than samples
      lo = std::min(lo, n - 1);
      hi = lo + 1;
    }
    return {lo, hi};
  }
  const double scaled = pacing(t) * static_cast<double>(n);
  // Tolerance so that e.g. 0.3 * 100 = 30.000000000000004 rounds up to 30.
  auto hi = static_cast<std::size_t>(std::ceil(scaled - 1e-7));
  hi = std::clamp(hi, std::min(batch_size, n), n);
  return {0, hi};
}

void write_pacing_curve(std::ostream& out, const PacingFunction& pacing, std::size_t t_end) {
  char buf[64];
  out << "t,lambda\n";
  for (std::size_t t = 0; t < t_end; ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t, pacing(t));
    out << buf;
  }
}

}  // namespace mexit
