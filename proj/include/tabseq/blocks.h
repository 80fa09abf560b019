#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabseq/encoding.h"
#include "tabseq/tensor.h"

// Building blocks over the feature-token tensor of shape (N, J, d): N rows,
// J features (the sequence axis) and d embedding channels.
namespace tabseq::nn {

using tabseq::to_string;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_parameters(const std::string& prefix, ParameterList& out) const = 0;

  ParameterList parameters(const std::string& prefix = "") const;
  std::size_t parameter_count() const;
};

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid, kSilu };

Tensor activate(const Tensor& x, Activation act);
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

// y = x W + b with W stored as (in, out).
class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  Tensor weight;
  Tensor bias;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  Tensor gamma;
  Tensor beta;
};

// One mini-batch of encoded rows.
struct Batch {
  std::size_t rows = 0;
  std::vector<std::size_t> codes;  // rows x J_cat, row-major
  Tensor ple;                      // (rows, sum of T_j), packed per feature
};

Batch make_batch(const encoding::EncodedDataset& data);
Batch make_batch(const encoding::EncodedDataset& data, std::span<const std::size_t> rows);

// PLE concatenated with one-hot categoricals: (rows, sum T_j + sum (K_j+1)).
Tensor flatten_inputs(const Batch& batch, const encoding::FeatureLayout& layout);

// Per-feature token embeddings. Categorical features look up rows of their
// own table (K_j + 1 rows including the unknown slot); numerical features go
// through their own linear map T_j -> d with bias. Output tokens are ordered
// categoricals first, then numericals.
class FeatureEmbedding : public Module {
 public:
  FeatureEmbedding() = default;
  FeatureEmbedding(const encoding::FeatureLayout& layout, std::size_t d, std::mt19937_64& rng);

  Tensor forward(const Batch& batch) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  const encoding::FeatureLayout& layout() const { return layout_; }
  std::size_t width() const { return d_; }

  Tensor categorical_table;  // (sum (K_j+1), d)
  Tensor numerical_weight;   // (sum T_j, d)
  Tensor numerical_bias;     // (J_num, d)

 private:
  encoding::FeatureLayout layout_;
  std::size_t d_ = 0;
};

// Gathers rows of `table`: output[n, f] = table[offsets[f] + codes[n, f]].
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> codes,
                        std::span<const std::size_t> table_rows, std::size_t rows);
// output[n, f] = sum_t ple[n, off_f + t] * weight[off_f + t] + bias[f].
Tensor feature_linear(const Tensor& ple, const Tensor& weight, const Tensor& bias,
                      std::span<const std::size_t> bin_counts);

enum class CellKind { kVanilla, kGRU, kLSTM };
CellKind parse_cell(std::string_view name);
std::string_view to_string(CellKind kind);

// Recurrent layer iterating over the feature axis, h_0 = 0. The vanilla cell
// computes h_t = act(W_h h_{t-1} + W_x x_t + b); weights are stored
// transposed for row-major batches.
class RNNLayer : public Module {
 public:
  RNNLayer() = default;
  RNNLayer(std::size_t input, std::size_t hidden, CellKind kind, Activation act, std::mt19937_64& rng);

  // (N, J, input) -> hidden states (N, J, hidden)
  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  std::size_t hidden() const { return hidden_; }
  CellKind kind() const { return kind_; }

  Tensor w_x;  // (input, gates * hidden)
  Tensor w_h;  // (hidden, gates * hidden)
  Tensor b;    // (gates * hidden)

 private:
  std::size_t hidden_ = 0;
  CellKind kind_ = CellKind::kVanilla;
  Activation act_ = Activation::kTanh;
};

enum class ScanMode { kRecurrent, kFused };
ScanMode parse_scan_mode(std::string_view name);
std::string_view to_string(ScanMode mode);

struct SSMTrace {
  Tensor delta;                // (N, J, 1) or (N, J, d)
  Tensor b;                    // (N, J, state)
  Tensor c;                    // (N, J, state)
  std::vector<Tensor> states;  // h_1..h_J, each (N, d, state)
};

// Selective state-space block. Per token j the hidden state is updated as
//   h_j = exp(delta_j * A) * h_{j-1} + (delta_j * B_j) * x_j
// with every product a broadcasting elementwise product, then read out as
//   y_j = sum over state of (h_j * C_j) + D * x_j.
// The block output is out_proj(y * silu(gate_proj(x))).
class SSMBlock : public Module {
 public:
  SSMBlock() = default;
  SSMBlock(std::size_t d, std::size_t state, bool per_channel_delta, std::mt19937_64& rng);

  // (N, J, d) -> (N, J, d)
  Tensor forward(const Tensor& x, ScanMode mode = ScanMode::kRecurrent, SSMTrace* trace = nullptr) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  // A = -exp(A_log), strictly negative.
  Tensor realized_a() const;
  std::size_t state() const { return state_; }

  Tensor a_log;  // (d, state)
  Tensor skip;   // D, (d)
  Linear delta_proj;
  Linear b_proj;
  Linear c_proj;
  Linear gate_proj;
  Linear out_proj;

 private:
  std::size_t d_ = 0;
  std::size_t state_ = 0;
};

// Scan computed by one op: the per-step intermediates are not materialized,
// only the (N, J, d, state) state history retained for backward.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& skip, std::vector<Tensor>* states = nullptr);

// Same recurrence unrolled into per-step tape ops.
Tensor recurrent_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      const Tensor& skip, std::vector<Tensor>* states = nullptr);

struct AttentionTrace {
  Tensor weights;  // (N, H, J, J)
};

// Pre-norm transformer block without masking:
//   x + out(attn(norm1(x))), then + ffn(norm2(.)).
class AttentionBlock : public Module {
 public:
  AttentionBlock() = default;
  AttentionBlock(std::size_t d, std::size_t heads, std::size_t ffn_hidden, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, AttentionTrace* trace = nullptr) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  std::size_t heads() const { return heads_; }

  LayerNorm norm1;
  Linear qkv;
  Linear out;
  LayerNorm norm2;
  Linear ffn_in;
  Linear ffn_out;

 private:
  std::size_t heads_ = 1;
};

// Per-head dot products from packed (N, J, 3d) projections -> (N, H, J, J).
Tensor attention_scores(const Tensor& qkv, std::size_t heads);
// Weighted value mix: (N, H, J, J) x values of (N, J, 3d) -> (N, J, d).
Tensor attention_mix(const Tensor& weights, const Tensor& qkv, std::size_t heads);

// Mean over the feature axis: (N, J, h) -> (N, h).
Tensor pool_mean(const Tensor& h);

class MLP : public Module {
 public:
  MLP() = default;
  MLP(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  std::vector<Linear> layers;
};

// Input projection, residual blocks x + up(relu(down(norm(x)))), then
// norm -> relu -> linear output.
class ResNet : public Module {
 public:
  struct Block {
    LayerNorm norm;
    Linear down;
    Linear up;
  };

  ResNet() = default;
  ResNet(std::size_t in, std::size_t width, std::size_t bottleneck, std::size_t blocks, std::size_t out,
         std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  Linear input;
  std::vector<Block> blocks;
  LayerNorm final_norm;
  Linear output;
};

// Two-layer MLP task head: linear -> relu -> linear(1).
class TaskHead : public Module {
 public:
  TaskHead() = default;
  TaskHead(std::size_t in, std::size_t hidden, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParameterList& out) const override;

  Linear hidden;
  Linear output;
};

// Named tensor container: magic "TSQT", u32 version, u32 count, then per
// tensor a u32-length-prefixed name, u32 rank, u64 dims and little-endian
// float32 values.
inline constexpr std::uint32_t kTensorFileVersion = 1;
void write_tensors(std::ostream& out, const ParameterList& tensors);
ParameterList read_tensors(std::istream& in);
// Copies values from `source` into same-named, same-shaped parameters.
void load_parameters(const ParameterList& target, const ParameterList& source);

}  // namespace tabseq::nn
