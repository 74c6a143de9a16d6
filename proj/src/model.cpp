#include "ropelab/model.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <string>

namespace ropelab {

namespace {

constexpr double kRmsEpsilon = 1e-5;

void fill_uniform(MatrixXs& m, Index rows, Index cols, SplitMix64& rng, double range) {
  m.resize(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-range, range);
}

MatrixXs rms_norm(const MatrixXs& x, const VectorXs& gain) {
  const VectorXs inv_rms =
      ((x.array().square().rowwise().sum() / static_cast<double>(x.cols())) + kRmsEpsilon)
          .rsqrt()
          .matrix();
  return inv_rms.asDiagonal() * x * gain.asDiagonal();
}

MatrixXs silu(const MatrixXs& x) {
  return (x.array() / (1.0 + (-x.array()).exp())).matrix();
}

// Visits every parameter block in file order.
template <typename Weights, typename Fn>
void for_each_block(Weights& w, Fn&& fn) {
  fn(w.embedding.data(), w.embedding.size());
  for (auto& layer : w.layers) {
    for (auto* m : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w_in, &layer.w_out})
      fn(m->data(), m->size());
    fn(layer.attn_norm.data(), layer.attn_norm.size());
    fn(layer.mlp_norm.data(), layer.mlp_norm.size());
  }
  fn(w.final_norm.data(), w.final_norm.size());
}

ModelWeights allocate(const ModelSpec& spec) {
  const Index dm = spec.d_model();
  const Index dh = spec.d_hidden();
  ModelWeights w;
  w.embedding.resize(spec.vocab_size, dm);
  w.layers.resize(spec.n_layers);
  for (auto& layer : w.layers) {
    layer.wq.resize(dm, dm);
    layer.wk.resize(dm, dm);
    layer.wv.resize(dm, dm);
    layer.wo.resize(dm, dm);
    layer.w_in.resize(dm, dh);
    layer.w_out.resize(dh, dm);
    layer.attn_norm = VectorXs::Ones(dm);
    layer.mlp_norm = VectorXs::Ones(dm);
  }
  w.final_norm = VectorXs::Ones(dm);
  return w;
}

std::string header_line(const ModelSpec& spec) {
  std::ostringstream os;
  os << "TTW1 " << spec.n_layers << ' ' << spec.n_heads << ' ' << spec.d_head << ' '
     << spec.vocab_size;
  return os.str();
}

}  // namespace

void ModelSpec::validate() const {
  require(n_layers >= 1, "model: n_layers must be >= 1");
  require(n_heads >= 1, "model: n_heads must be >= 1");
  require(d_head >= 2 && d_head % 2 == 0, "model: d_head must be even and >= 2");
  require(vocab_size >= 2, "model: vocab_size must be >= 2");
  require(max_positions >= 1, "model: max_positions must be >= 1");
  require(init_range > 0.0 && std::isfinite(init_range), "model: init_range must be positive");
}

ModelWeights init_weights(const ModelSpec& spec) {
  spec.validate();
  const Index dm = spec.d_model();
  const Index dh = spec.d_hidden();
  SplitMix64 rng(spec.seed);
  ModelWeights w = allocate(spec);
  fill_uniform(w.embedding, spec.vocab_size, dm, rng, spec.init_range);
  for (auto& layer : w.layers) {
    fill_uniform(layer.wq, dm, dm, rng, spec.init_range);
    fill_uniform(layer.wk, dm, dm, rng, spec.init_range);
    fill_uniform(layer.wv, dm, dm, rng, spec.init_range);
    fill_uniform(layer.wo, dm, dm, rng, spec.init_range);
    fill_uniform(layer.w_in, dm, dh, rng, spec.init_range);
    fill_uniform(layer.w_out, dh, dm, rng, spec.init_range);
  }
  return w;
}

void zero_query_projections(ModelWeights& weights) {
  for (auto& layer : weights.layers) layer.wq.setZero();
}

ForwardResult forward(const ModelSpec& spec, const ModelWeights& weights,
                      std::span<const TokenId> tokens, const RopeConfig& rope,
                      const ScalingPolicy& policy, const ForwardOptions& options) {
  spec.validate();
  rope.validate();
  policy.validate();
  require(rope.d == spec.d_head, "forward: rope.d (" + std::to_string(rope.d) +
                                     ") must equal d_head (" + std::to_string(spec.d_head) + ")");
  require(static_cast<int>(weights.layers.size()) == spec.n_layers,
          "forward: weights do not match n_layers");
  require(weights.embedding.rows() == spec.vocab_size && weights.embedding.cols() == spec.d_model(),
          "forward: embedding shape does not match spec");
  const auto n = static_cast<Index>(tokens.size());
  require(n >= 1, "forward: empty token sequence");
  require(n <= spec.max_positions, "forward: sequence of " + std::to_string(n) +
                                       " tokens exceeds max_positions " +
                                       std::to_string(spec.max_positions));

  const Index dm = spec.d_model();
  MatrixXs x(n, dm);
  for (Index i = 0; i < n; ++i) {
    const TokenId id = tokens[i];
    require(id >= 0 && id < spec.vocab_size,
            "forward: token id " + std::to_string(id) + " at index " + std::to_string(i) +
                " is outside the vocabulary");
    x.row(i) = weights.embedding.row(id);
  }

  const RotaryTable rotary = make_rotary_table(rope, n);
  ForwardResult result;
  const int last = spec.n_layers - 1;
  for (int l = 0; l < spec.n_layers; ++l) {
    const LayerWeights& lw = weights.layers[l];
    const MatrixXs h = rms_norm(x, lw.attn_norm);
    const MatrixXs q = h * lw.wq;
    const MatrixXs k = h * lw.wk;
    const MatrixXs v = h * lw.wv;

    MatrixXs mixed(n, dm);
    AttentionTrace<double> trace;
    for (int head = 0; head < spec.n_heads; ++head) {
      const Index col = static_cast<Index>(head) * spec.d_head;
      auto out = attend_head<double>(q.middleCols(col, spec.d_head), k.middleCols(col, spec.d_head),
                                     v.middleCols(col, spec.d_head), l, rotary, policy,
                                     options.trace);
      mixed.middleCols(col, spec.d_head) = out.output;
      if (options.trace != TraceMode::Off) trace.entropy.push_back(std::move(out.entropy));
      if (options.trace == TraceMode::Full) trace.probs.push_back(std::move(out.probs));
    }
    if (options.trace != TraceMode::Off) result.traces.push_back(std::move(trace));

    // The last block's residual stream only feeds the output head.
    if (l == last && !options.compute_logits) break;
    x += mixed * lw.wo;
    x += silu(rms_norm(x, lw.mlp_norm) * lw.w_in) * lw.w_out;
  }

  if (options.compute_logits)
    result.logits = rms_norm(x, weights.final_norm) * weights.embedding.transpose();
  return result;
}

void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const ModelWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open weight file for writing: " + path.string());
  out << header_line(spec) << '\n';
  for_each_block(weights, [&](const double* data, Index count) {
    for (Index i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint64_t>(data[i]);
      char bytes[8];
      for (char& b : bytes) {
        b = static_cast<char>(bits & 0xFF);
        bits >>= 8;
      }
      out.write(bytes, 8);
    }
  });
  if (!out) throw IoError("failed writing weight file: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path, const ModelSpec& spec) {
  spec.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path.string());
  std::string header;
  std::getline(in, header);
  require(header == header_line(spec), "weight file header '" + header +
                                           "' does not match model spec '" + header_line(spec) +
                                           "'");
  ModelWeights w = allocate(spec);
  for_each_block(w, [&](double* data, Index count) {
    for (Index i = 0; i < count; ++i) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8))
        throw IoError("weight file truncated: " + path.string());
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[b];
      data[i] = std::bit_cast<double>(bits);
    }
  });
  if (in.peek() != std::char_traits<char>::eof())
    throw ValidationError("weight file has trailing data: " + path.string());
  for_each_block(w, [&](const double* data, Index count) {
    for (Index i = 0; i < count; ++i)
      require(std::isfinite(data[i]), "weight file contains non-finite values");
  });
  return w;
}

}  // namespace ropelab
