#include "ropelab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ropelab {

namespace {

// log_c(i) via change of base.
double log_base(double c, double i) { return std::log(i) / std::log(c); }

}  // namespace

std::string_view to_string(ScalingKind kind) {
  switch (kind) {
    case ScalingKind::None: return "None";
    case ScalingKind::Constant: return "Constant";
    case ScalingKind::YaRN: return "YaRN";
    case ScalingKind::ChiangLogN: return "ChiangLogN";
    case ScalingKind::ReRoPE: return "ReRoPE";
    case ScalingKind::EntropyAware: return "EntropyAware";
  }
  return "unknown";
}

ScalingKind parse_scaling_kind(std::string_view text) {
  for (auto kind : {ScalingKind::None, ScalingKind::Constant, ScalingKind::YaRN,
                    ScalingKind::ChiangLogN, ScalingKind::ReRoPE, ScalingKind::EntropyAware})
    if (to_string(kind) == text) return kind;
  throw ValidationError("unknown scaling kind '" + std::string(text) + "'");
}

ScalingPolicy ScalingPolicy::constant(double v) {
  ScalingPolicy p;
  p.kind = ScalingKind::Constant;
  p.value = v;
  return p;
}

ScalingPolicy ScalingPolicy::yarn(double s) {
  ScalingPolicy p;
  p.kind = ScalingKind::YaRN;
  p.scale = s;
  return p;
}

ScalingPolicy ScalingPolicy::chiang_log_n(std::int64_t n_train) {
  ScalingPolicy p;
  p.kind = ScalingKind::ChiangLogN;
  p.train_length = n_train;
  return p;
}

ScalingPolicy ScalingPolicy::rerope(std::int64_t c) {
  ScalingPolicy p;
  p.kind = ScalingKind::ReRoPE;
  p.context = c;
  return p;
}

ScalingPolicy ScalingPolicy::entropy_aware(std::int64_t c, std::set<int> exempt) {
  ScalingPolicy p;
  p.kind = ScalingKind::EntropyAware;
  p.context = c;
  p.exempt_layers = std::move(exempt);
  return p;
}

void ScalingPolicy::validate() const {
  switch (kind) {
    case ScalingKind::None:
      break;
    case ScalingKind::Constant:
      require(value > 0.0 && std::isfinite(value), "scaling: constant t must be positive");
      break;
    case ScalingKind::YaRN:
      require(scale > 0.0 && std::isfinite(scale), "scaling: YaRN needs s > 0");
      require(0.1 * std::log(scale) + 1.0 > 0.0, "scaling: YaRN t = 0.1 ln s + 1 is not positive");
      break;
    case ScalingKind::ChiangLogN:
      require(train_length >= 2, "scaling: ChiangLogN needs n_train >= 2 so that ln n > 0");
      break;
    case ScalingKind::ReRoPE:
    case ScalingKind::EntropyAware:
      require(context > 1, "scaling: context c must be > 1 (log base c is degenerate otherwise)");
      break;
  }
}

double logit_scale(const ScalingPolicy& policy, int layer, Position position) {
  require(layer >= 0, "logit_scale: layer must be non-negative");
  require(position >= 0, "logit_scale: position must be non-negative");
  policy.validate();
  const double tokens = static_cast<double>(position) + 1.0;
  const double c = static_cast<double>(policy.context);
  switch (policy.kind) {
    case ScalingKind::None:
      return 1.0;
    case ScalingKind::Constant:
      return policy.value;
    case ScalingKind::YaRN:
      return 0.1 * std::log(policy.scale) + 1.0;
    case ScalingKind::ChiangLogN:
      return std::log(static_cast<double>(policy.train_length));
    case ScalingKind::ReRoPE:
      return std::max(log_base(c, tokens), kReRoPEFloor);
    case ScalingKind::EntropyAware:
      if (policy.exempt_layers.contains(layer)) return 1.0;
      return std::max(log_base(c, tokens), 1.0);
  }
  return 1.0;
}

}  // namespace ropelab
