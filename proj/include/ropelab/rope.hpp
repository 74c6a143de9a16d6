#pragma once

#include <cmath>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ropelab/types.hpp"

namespace ropelab {

enum class RopeMethod { RoPE, PI, NtkAware, NtkByParts, YaRN, ABF, EntropyAwareABF };

// Orientation of the NTK-By-Parts ramp. PaperLiteral assigns gamma = 0 (full
// 1/s interpolation) to high frequencies; YarnStyle is its complement.
enum class NtkConvention { PaperLiteral, YarnStyle };

std::string_view to_string(RopeMethod method);
std::string_view to_string(NtkConvention convention);
RopeMethod parse_rope_method(std::string_view text);
NtkConvention parse_ntk_convention(std::string_view text);

/// Everything needed to reproduce the rotary coefficients of one method.
///
/// The context scaling factor is never stored: scale() derives it from the
/// two window sizes so the three values cannot disagree.
struct RopeConfig {
  RopeMethod method = RopeMethod::RoPE;
  int d = 128;                      // head dimension, even
  double base = 10000.0;
  std::int64_t context = 4096;      // pretrained window
  std::int64_t target_context = 4096;
  double ntk_alpha = 1.0;           // low-frequency ramp boundary (rotations in window)
  double ntk_beta = 32.0;           // high-frequency ramp boundary
  // Unset means yarn-style for the NTK-Aware base and paper-literal for the
  // NTK-By-Parts/YaRN ramp.
  std::optional<NtkConvention> ntk_convention;
  double abf_base = 500000.0;

  NtkConvention convention() const {
    return ntk_convention.value_or(method == RopeMethod::NtkAware ? NtkConvention::YarnStyle
                                                                  : NtkConvention::PaperLiteral);
  }

  double scale() const { return static_cast<double>(target_context) / static_cast<double>(context); }
  Index pairs() const { return d / 2; }

  void validate() const;
};

struct FrequencySpectrum {
  VectorXs theta;  // radians per position step, one per element pair

  Index pairs() const { return theta.size(); }
};

/// Base actually fed into theta_j = base^(-2j/d) for the configured method.
double effective_base(const RopeConfig& config);

/// Ramp weight in [0, 1] for pair j. Only defined for NTK-By-Parts and YaRN.
double ntk_gamma(Index j, const RopeConfig& config);

/// (1 - gamma)/s + gamma: the per-pair multiplier applied to theta_j.
double ntk_scale_factor(Index j, const RopeConfig& config);

/// Rotations completed by pair j over the pretrained window, c / (2*pi*b^(2j/d)).
double rotations_in_window(Index j, const RopeConfig& config);

FrequencySpectrum compute_theta(const RopeConfig& config);

double effective_position(Position m, const RopeConfig& config);

/// Logit multiplier the method itself prescribes (YaRN: 0.1 ln s + 1, else 1).
/// Dynamic policies are layered on separately, see scaling.hpp.
double method_logit_scale(const RopeConfig& config);

struct RopeCoefficient {
  double cos_coeff;
  double sin_coeff;
};

/// sqrt(t) * cos(m' theta_j) and sqrt(t) * sin(m' theta_j).
RopeCoefficient rope_coefficient(Position m, Index j, const RopeConfig& config, double t);
RopeCoefficient rope_coefficient(Position m, Index j, const RopeConfig& config,
                                 const FrequencySpectrum& spectrum, double t);

/// Rotates each (x[2j], x[2j+1]) pair by m' * theta_j.
template <typename Derived>
Vector<typename Derived::Scalar> apply_rope(const Eigen::MatrixBase<Derived>& x, Position m,
                                            const RopeConfig& config,
                                            const FrequencySpectrum& spectrum) {
  using Scalar = typename Derived::Scalar;
  require(x.size() == config.d, "apply_rope: vector length " + std::to_string(x.size()) +
                                    " does not match head dimension " + std::to_string(config.d));
  require(m >= 0, "apply_rope: position must be non-negative");
  const double pos = effective_position(m, config);
  Vector<Scalar> out(x.size());
  for (Index j = 0; j < spectrum.pairs(); ++j) {
    const double angle = pos * spectrum.theta(j);
    const auto c = static_cast<Scalar>(std::cos(angle));
    const auto s = static_cast<Scalar>(std::sin(angle));
    const Scalar x0 = x(2 * j);
    const Scalar x1 = x(2 * j + 1);
    out(2 * j) = x0 * c - x1 * s;
    out(2 * j + 1) = x1 * c + x0 * s;
  }
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> apply_rope(const Eigen::MatrixBase<Derived>& x, Position m,
                                            const RopeConfig& config) {
  config.validate();
  return apply_rope(x, m, config, compute_theta(config));
}

/// Cos/sin of m' * theta_j for positions 0..n-1, one row per position.
struct RotaryTable {
  MatrixXs cos;
  MatrixXs sin;

  Index positions() const { return cos.rows(); }
  Index pairs() const { return cos.cols(); }
};

RotaryTable make_rotary_table(const RopeConfig& config, Index n_positions);

/// Row r of x is treated as the vector at position r.
template <typename Derived>
Matrix<typename Derived::Scalar> rotate_rows(const Eigen::MatrixBase<Derived>& x,
                                             const RotaryTable& table) {
  using Scalar = typename Derived::Scalar;
  require(x.cols() == 2 * table.pairs(), "rotate_rows: column count does not match table");
  require(x.rows() <= table.positions(), "rotate_rows: more rows than tabulated positions");
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index j = 0; j < table.pairs(); ++j) {
      const auto c = static_cast<Scalar>(table.cos(r, j));
      const auto s = static_cast<Scalar>(table.sin(r, j));
      const Scalar x0 = x(r, 2 * j);
      const Scalar x1 = x(r, 2 * j + 1);
      out(r, 2 * j) = x0 * c - x1 * s;
      out(r, 2 * j + 1) = x1 * c + x0 * s;
    }
  }
  return out;
}

/// CSV: method,j,theta,position,cos_coeff,sin_coeff. t is method_logit_scale(config).
void write_coefficient_dump(std::ostream& out, const RopeConfig& config,
                            std::span<const Position> positions);

}  // namespace ropelab
