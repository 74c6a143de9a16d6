#include "ropelab/rope.hpp"

#include <array>
#include <numbers>
#include <ostream>
#include <utility>

#include "ropelab/csv.hpp"

namespace ropelab {

namespace {

constexpr std::array<std::pair<RopeMethod, std::string_view>, 7> kMethodNames{{
    {RopeMethod::RoPE, "RoPE"},
    {RopeMethod::PI, "PI"},
    {RopeMethod::NtkAware, "NTK-Aware"},
    {RopeMethod::NtkByParts, "NTK-By-Parts"},
    {RopeMethod::YaRN, "YaRN"},
    {RopeMethod::ABF, "ABF"},
    {RopeMethod::EntropyAwareABF, "EntropyAwareABF"},
}};

bool uses_ntk_ramp(RopeMethod method) {
  return method == RopeMethod::NtkByParts || method == RopeMethod::YaRN;
}

void check_pair_index(Index j, const RopeConfig& config) {
  require(j >= 0 && j < config.pairs(),
          "pair index " + std::to_string(j) + " outside [0, " + std::to_string(config.pairs()) + ")");
}

}  // namespace

std::string_view to_string(RopeMethod method) {
  for (const auto& [m, name] : kMethodNames)
    if (m == method) return name;
  return "unknown";
}

std::string_view to_string(NtkConvention convention) {
  return convention == NtkConvention::PaperLiteral ? "paper-literal" : "yarn-style";
}

RopeMethod parse_rope_method(std::string_view text) {
  for (const auto& [m, name] : kMethodNames)
    if (name == text) return m;
  throw ValidationError("unknown rope method '" + std::string(text) + "'");
}

NtkConvention parse_ntk_convention(std::string_view text) {
  if (text == "paper-literal") return NtkConvention::PaperLiteral;
  if (text == "yarn-style") return NtkConvention::YarnStyle;
  throw ValidationError("unknown ntk convention '" + std::string(text) + "'");
}

void RopeConfig::validate() const {
  require(d >= 2 && d % 2 == 0, "rope: head dimension must be even and >= 2, got " + std::to_string(d));
  require(base > 0.0 && std::isfinite(base), "rope: base must be positive");
  require(abf_base > 0.0 && std::isfinite(abf_base), "rope: abf_base must be positive");
  require(context >= 1, "rope: pretrained context must be >= 1");
  require(target_context >= 1, "rope: target context must be >= 1");
  require(ntk_alpha > 0.0 && ntk_beta > 0.0, "rope: ramp boundaries must be positive");
  require(ntk_alpha < ntk_beta, "rope: ntk_alpha must be smaller than ntk_beta");
  // b^(d/(d-2)) has no meaning at d = 2.
  require(method != RopeMethod::NtkAware || d > 2, "rope: NTK-Aware needs d > 2");
}

double effective_base(const RopeConfig& config) {
  const double d = config.d;
  switch (config.method) {
    case RopeMethod::ABF:
    case RopeMethod::EntropyAwareABF:
      return config.abf_base;
    case RopeMethod::NtkAware:
      if (config.convention() == NtkConvention::PaperLiteral)
        return std::pow(config.base, d / (d - 2.0));
      return config.base * std::pow(config.scale(), d / (d - 2.0));
    default:
      return config.base;
  }
}

double rotations_in_window(Index j, const RopeConfig& config) {
  check_pair_index(j, config);
  const double wavelength =
      2.0 * std::numbers::pi * std::pow(config.base, 2.0 * static_cast<double>(j) / config.d);
  return static_cast<double>(config.context) / wavelength;
}

double ntk_gamma(Index j, const RopeConfig& config) {
  require(uses_ntk_ramp(config.method), "ntk_gamma: only defined for NTK-By-Parts and YaRN");
  const double r = rotations_in_window(j, config);
  double literal;
  if (r > config.ntk_beta)
    literal = 0.0;
  else if (r < config.ntk_alpha)
    literal = 1.0;
  else
    literal = (config.ntk_beta - r) / (config.ntk_beta - config.ntk_alpha);
  return config.convention() == NtkConvention::PaperLiteral ? literal : 1.0 - literal;
}

double ntk_scale_factor(Index j, const RopeConfig& config) {
  const double gamma = ntk_gamma(j, config);
  return (1.0 - gamma) / config.scale() + gamma;
}

FrequencySpectrum compute_theta(const RopeConfig& config) {
  config.validate();
  const double base = effective_base(config);
  FrequencySpectrum spectrum{VectorXs(config.pairs())};
  for (Index j = 0; j < config.pairs(); ++j) {
    double theta = std::pow(base, -2.0 * static_cast<double>(j) / config.d);
    if (uses_ntk_ramp(config.method)) theta *= ntk_scale_factor(j, config);
    spectrum.theta(j) = theta;
  }
  return spectrum;
}

double effective_position(Position m, const RopeConfig& config) {
  require(m >= 0, "effective_position: position must be non-negative");
  if (config.method == RopeMethod::PI) return static_cast<double>(m) / config.scale();
  return static_cast<double>(m);
}

double method_logit_scale(const RopeConfig& config) {
  if (config.method == RopeMethod::YaRN) return 0.1 * std::log(config.scale()) + 1.0;
  return 1.0;
}

RopeCoefficient rope_coefficient(Position m, Index j, const RopeConfig& config,
                                 const FrequencySpectrum& spectrum, double t) {
  require(t > 0.0 && std::isfinite(t), "rope_coefficient: t must be positive");
  check_pair_index(j, config);
  const double angle = effective_position(m, config) * spectrum.theta(j);
  const double amplitude = std::sqrt(t);
  return {amplitude * std::cos(angle), amplitude * std::sin(angle)};
}

RopeCoefficient rope_coefficient(Position m, Index j, const RopeConfig& config, double t) {
  return rope_coefficient(m, j, config, compute_theta(config), t);
}

RotaryTable make_rotary_table(const RopeConfig& config, Index n_positions) {
  const FrequencySpectrum spectrum = compute_theta(config);
  RotaryTable table{MatrixXs(n_positions, config.pairs()), MatrixXs(n_positions, config.pairs())};
  for (Index m = 0; m < n_positions; ++m) {
    const double pos = effective_position(m, config);
    for (Index j = 0; j < config.pairs(); ++j) {
      const double angle = pos * spectrum.theta(j);
      table.cos(m, j) = std::cos(angle);
      table.sin(m, j) = std::sin(angle);
    }
  }
  return table;
}

void write_coefficient_dump(std::ostream& out, const RopeConfig& config,
                            std::span<const Position> positions) {
  const FrequencySpectrum spectrum = compute_theta(config);
  const double t = method_logit_scale(config);
  const std::string_view method = to_string(config.method);
  out << "method,j,theta,position,cos_coeff,sin_coeff\n";
  for (Index j = 0; j < spectrum.pairs(); ++j) {
    for (const Position m : positions) {
      const RopeCoefficient h = rope_coefficient(m, j, config, spectrum, t);
      out << method << ',' << j << ',' << format_double(spectrum.theta(j)) << ',' << m << ','
          << format_double(h.cos_coeff) << ',' << format_double(h.sin_coeff) << '\n';
    }
  }
}

}  // namespace ropelab
