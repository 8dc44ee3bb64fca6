#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace mexit {

enum class PacingKind {
  linear,
  root,
  root_p,
  geometric,
  fixed_exponential,
  single_step,
  baby_step,
  one_pass,
};

std::string_view to_string(PacingKind kind);
PacingKind pacing_kind_from_string(std::string_view name);

/// Hyper-parameters for every pacing kind; each kind reads only its own.
///
///   linear, root, root_p, geometric: start (lambda_0), full_at (T_f), exponent (p)
///   fixed_exponential:               start (s), growth (r), step (delta)
///   single_step:                     start (s), step (delta)
///   baby_step, one_pass:             buckets, step (batches per bucket)
struct PacingConfig {
  PacingKind kind = PacingKind::fixed_exponential;
  double start = 0.04;
  double full_at = 1000.0;
  double exponent = 2.0;
  double growth = 1.9;
  std::size_t step = 300;
  std::size_t buckets = 5;

  static PacingConfig fixed_exponential(double s, double r, std::size_t delta);
  static PacingConfig single_step(double s, std::size_t delta);
  static PacingConfig continuous(PacingKind kind, double lambda0, double full_at, double exponent = 2.0);
  static PacingConfig bucketed(PacingKind kind, std::size_t buckets, std::size_t batches_per_bucket);

  friend bool operator==(const PacingConfig&, const PacingConfig&) = default;
};

/// A validated pacing function lambda(t): batch index -> fraction in (0,1]
/// of the sorted data available for sampling. Construction throws
/// InvalidArgument on an invalid config; evaluation never throws.
class PacingFunction {
 public:
  explicit PacingFunction(PacingConfig config);

  double operator()(std::size_t t) const;

  /// First batch index from which lambda stays at 1, or nullopt for one_pass.
  std::optional<std::size_t> saturation() const;

  /// Index of the active bucket for the discrete kinds.
  std::size_t bucket(std::size_t t) const;

  const PacingConfig& config() const { return config_; }

  /// Short label, e.g. "FEP(300)", "SSP(300)", "linear(0.2,100)".
  std::string label() const;

 private:
  PacingConfig config_;
  std::size_t saturation_ = 0;
};

inline double pacing_eval(const PacingFunction& pacing, std::size_t t) { return pacing(t); }

/// Half-open interval [lo, hi) of positions in a difficulty permutation.
struct IndexRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t size() const { return hi - lo; }
  bool contains(std::size_t i) const { return i >= lo && i < hi; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Positions of the sorted data that batch t may draw from. Prefix kinds give
/// [0, clamp(ceil(lambda(t) * n), min(batch_size, n), n)); one_pass gives the
/// active bucket only.
IndexRange active_range(const PacingFunction& pacing, std::size_t t, std::size_t n, std::size_t batch_size);

/// Writes a `t,lambda` header, then one line per t in [0, t_end).
void write_pacing_curve(std::ostream& out, const PacingFunction& pacing, std::size_t t_end);

}  // namespace mexit
