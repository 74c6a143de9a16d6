#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ropelab/attention.hpp"

namespace ropelab {

/// SplitMix64 generator (Steele, Lea and Flood). Drives weight init.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Top 53 bits of the next draw mapped onto [lo, hi).
  double uniform(double lo, double hi) {
    const double unit = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
  }

 private:
  std::uint64_t state_;
};

struct ModelSpec {
  int n_layers = 4;
  int n_heads = 8;
  int d_head = 32;
  int vocab_size = 32000;
  std::int64_t max_positions = 4096;
  std::uint64_t seed = 1;
  double init_range = 0.02;  // weights drawn uniformly from [-init_range, init_range)

  int d_model() const { return n_heads * d_head; }
  int d_hidden() const { return 4 * d_model(); }
  void validate() const;
};

struct LayerWeights {
  MatrixXs wq, wk, wv, wo;  // [d_model x d_model]
  MatrixXs w_in;            // [d_model x 4 d_model]
  MatrixXs w_out;           // [4 d_model x d_model]
  VectorXs attn_norm;       // RMS-norm gains
  VectorXs mlp_norm;
};

/// Token embedding doubles as the output projection (tied weights).
struct ModelWeights {
  MatrixXs embedding;  // [vocab x d_model]
  std::vector<LayerWeights> layers;
  VectorXs final_norm;
};

/// Draw order: embedding, then per layer Q, K, V, O, MLP-in, MLP-out, each
/// matrix row-major. Norm gains are set to one and consume no draws.
ModelWeights init_weights(const ModelSpec& spec);

/// Forces every query to zero, which makes every attention row uniform.
void zero_query_projections(ModelWeights& weights);

struct ForwardOptions {
  TraceMode trace = TraceMode::Off;
  bool compute_logits = true;
};

struct ForwardResult {
  MatrixXs logits;                              // [n x vocab], empty if not requested
  std::vector<AttentionTrace<double>> traces;   // one per layer, empty if trace is Off
};

/// Pre-norm decoder: x += Attn(RMSNorm(x)); x += MLP(RMSNorm(x)), with
/// MLP(h) = SiLU(h W_in) W_out and logits = RMSNorm(x) E^T.
ForwardResult forward(const ModelSpec& spec, const ModelWeights& weights,
                      std::span<const TokenId> tokens, const RopeConfig& rope,
                      const ScalingPolicy& policy, const ForwardOptions& options = {});

/// Raw weight file: "TTW1 n_layers n_heads d_head vocab_size\n" followed by
/// little-endian binary64 values in init order, with each layer's two norm
/// gains after its MLP-out matrix and the final norm gain last.
void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const ModelWeights& weights);
ModelWeights load_weights(const std::filesystem::path& path, const ModelSpec& spec);

}  // namespace ropelab
