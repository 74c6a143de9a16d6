#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ropelab/rope.hpp"
#include "ropelab/scaling.hpp"

namespace ropelab {

/// Tolerance on sum(p) = 1 accepted by attention_entropy.
inline constexpr double kProbabilityTolerance = 1e-9;

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  require(logits.size() > 0, "softmax: empty logit row");
  const Scalar shift = logits.maxCoeff();
  Vector<Scalar> p = (logits.derived().array() - shift).exp().matrix();
  p /= p.sum();
  return p;
}

namespace detail {

template <typename Derived>
typename Derived::Scalar shannon_entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h = 0;
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0) h -= p(i) * std::log(p(i));
  return h;
}

}  // namespace detail

/// Shannon entropy -sum p ln p (with 0 ln 0 = 0) of one attention row.
template <typename Derived>
typename Derived::Scalar attention_entropy(const Eigen::MatrixBase<Derived>& p) {
  require(p.size() > 0, "attention_entropy: empty distribution");
  require(p.allFinite() && (p.array() >= 0).all(),
          "attention_entropy: probabilities must be finite and non-negative");
  const double total = static_cast<double>(p.sum());
  require(std::abs(total - 1.0) <= kProbabilityTolerance,
          "attention_entropy: probabilities sum to " + std::to_string(total) + ", not 1");
  return detail::shannon_entropy(p);
}

enum class TraceMode {
  Off,          // no trace
  EntropyOnly,  // one entropy per query row
  Full,         // full probability matrices plus entropies
};

template <typename Scalar>
struct HeadAttention {
  Matrix<Scalar> output;   // [n x d]
  Matrix<Scalar> probs;    // [n x n] lower-triangular, Full mode only
  Vector<Scalar> entropy;  // [n], unless mode is Off
};

/// Causal attention for one head.
///
/// logit(m, n) = t(layer, m) * <R_m q_m, R_n k_n> / sqrt(d) for n <= m. The
/// multiplier multiplies the whole row of query m, so dynamic (position
/// dependent) policies are well defined. Entries above the diagonal are never
/// formed and carry probability exactly zero.
template <typename Scalar>
HeadAttention<Scalar> attend_head(const Matrix<Scalar>& q, const Matrix<Scalar>& k,
                                  const Matrix<Scalar>& v, int layer, const RotaryTable& rotary,
                                  const ScalingPolicy& policy, TraceMode mode) {
  const Index n = q.rows();
  const Index d = q.cols();
  require(n >= 1, "attend: need at least one token");
  require(k.rows() == n && v.rows() == n, "attend: Q, K and V row counts differ");
  require(k.cols() == d, "attend: Q and K widths differ");
  require(d == 2 * rotary.pairs(), "attend: head width does not match rope dimension");
  require(q.allFinite() && k.allFinite() && v.allFinite(), "attend: non-finite input");

  const Matrix<Scalar> qr = rotate_rows(q, rotary);
  const Matrix<Scalar> kr = rotate_rows(k, rotary);

  HeadAttention<Scalar> result;
  result.output.resize(n, v.cols());
  if (mode != TraceMode::Off) result.entropy.resize(n);
  if (mode == TraceMode::Full) result.probs = Matrix<Scalar>::Zero(n, n);

  // Query rows are processed in blocks; block row i only ever sees keys 0..r0+i.
  constexpr Index kBlockRows = 64;
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  Matrix<Scalar> block;
  Vector<Scalar> weights(n);
  for (Index r0 = 0; r0 < n; r0 += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - r0);
    const Index width = r0 + rows;
    block.noalias() = qr.middleRows(r0, rows) * kr.topRows(width).transpose();
    for (Index i = 0; i < rows; ++i) {
      const Index m = r0 + i;
      auto row = block.row(i).head(m + 1);
      auto w = weights.head(m + 1);
      const auto t = static_cast<Scalar>(logit_scale(policy, layer, m));
      row *= t * inv_sqrt_d;
      row.array() -= row.maxCoeff();
      w = row.transpose().array().exp().matrix();
      const Scalar total = w.sum();
      // With z the shifted logits, H = ln(sum e^z) - sum(e^z z) / sum(e^z):
      // one logarithm per row instead of one per entry.
      if (mode != TraceMode::Off)
        result.entropy(m) = std::max(Scalar(0), std::log(total) - w.dot(row.transpose()) / total);
      row = w.transpose() / total;
      block.row(i).tail(width - m - 1).setZero();
    }
    result.output.middleRows(r0, rows).noalias() = block * v.topRows(width);
    if (mode == TraceMode::Full) result.probs.block(r0, 0, rows, width) = block;
  }
  return result;
}

template <typename Scalar>
struct AttentionInputs {
  std::vector<Matrix<Scalar>> q;  // one [n x d] matrix per head
  std::vector<Matrix<Scalar>> k;
  std::vector<Matrix<Scalar>> v;
  int layer = 0;
  RopeConfig rope;
  ScalingPolicy policy;
};

template <typename Scalar>
struct AttentionTrace {
  std::vector<Matrix<Scalar>> probs;    // per head, Full mode only
  std::vector<Vector<Scalar>> entropy;  // per head
};

template <typename Scalar>
struct AttentionResult {
  std::vector<Matrix<Scalar>> output;  // per head
  AttentionTrace<Scalar> trace;
};

template <typename Scalar>
AttentionResult<Scalar> attend(const AttentionInputs<Scalar>& inputs, TraceMode mode) {
  inputs.rope.validate();
  inputs.policy.validate();
  const std::size_t heads = inputs.q.size();
  require(heads >= 1, "attend: no heads");
  require(inputs.k.size() == heads && inputs.v.size() == heads, "attend: head counts differ");
  const Index n = inputs.q.front().rows();
  for (std::size_t h = 0; h < heads; ++h) {
    require(inputs.q[h].rows() == n, "attend: heads disagree on token count");
    require(inputs.q[h].cols() == inputs.rope.d, "attend: head width does not match rope.d");
  }
  const RotaryTable rotary = make_rotary_table(inputs.rope, n);

  AttentionResult<Scalar> result;
  for (std::size_t h = 0; h < heads; ++h) {
    auto head = attend_head(inputs.q[h], inputs.k[h], inputs.v[h], inputs.layer, rotary,
                            inputs.policy, mode);
    result.output.push_back(std::move(head.output));
    if (mode != TraceMode::Off) result.trace.entropy.push_back(std::move(head.entropy));
    if (mode == TraceMode::Full) result.trace.probs.push_back(std::move(head.probs));
  }
  return result;
}

}  // namespace ropelab
