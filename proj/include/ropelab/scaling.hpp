#pragma once

#include <set>
#include <string_view>

#include "ropelab/types.hpp"

namespace ropelab {

enum class ScalingKind { None, Constant, YaRN, ChiangLogN, ReRoPE, EntropyAware };

std::string_view to_string(ScalingKind kind);
ScalingKind parse_scaling_kind(std::string_view text);

/// Rule producing the attention-logit multiplier t for a (layer, query position).
///
/// Positions are 0-indexed; the contextual token count seen by the query at
/// position p under a causal mask is i = p + 1, which is what the logarithmic
/// policies consume.
struct ScalingPolicy {
  ScalingKind kind = ScalingKind::None;
  std::int64_t context = 4096;          // pretrained window c (ReRoPE, EntropyAware)
  double scale = 1.0;                   // s (YaRN)
  std::int64_t train_length = 4096;     // n (ChiangLogN)
  double value = 1.0;                   // Constant
  std::set<int> exempt_layers{0, 1};    // EntropyAware

  static ScalingPolicy none() { return {}; }
  static ScalingPolicy constant(double v);
  static ScalingPolicy yarn(double s);
  static ScalingPolicy chiang_log_n(std::int64_t n_train);
  static ScalingPolicy rerope(std::int64_t c);
  static ScalingPolicy entropy_aware(std::int64_t c, std::set<int> exempt = {0, 1});

  void validate() const;
};

/// Floor applied to ReRoPE's log_c(i) so that i = 1 still yields a positive t.
inline constexpr double kReRoPEFloor = 1e-6;

double logit_scale(const ScalingPolicy& policy, int layer, Position position);

}  // namespace ropelab
