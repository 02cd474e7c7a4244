#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "xannot/energy.hpp"

namespace xannot::neural {

/// Dense double-precision tensor with an optional gradient buffer of the same shape.
/// Image tensors use H x W x C layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  const double& operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  /// Allocates a zero gradient on first use.
  std::span<double> grad();
  std::span<const double> grad() const noexcept { return grad_; }
  void zero_grad();
  void drop_grad() noexcept { grad_.clear(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

// Each backward accumulates into the .grad() of its inputs.

/// Stride 1, zero padding 1. x: HxWxCin, weight: Cout x Cin x 3 x 3, bias: Cout.
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);
void conv3x3_backward(Tensor& x, Tensor& weight, Tensor& bias, const Tensor& dy);

/// Normalizes over the channel axis at every spatial position.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double epsilon);
void layernorm_backward(Tensor& x, Tensor& gain, Tensor& shift, double epsilon, const Tensor& dy);

/// Exact form x * Phi(x).
Tensor gelu(const Tensor& x);
void gelu_backward(Tensor& x, const Tensor& dy);

/// 2x2 window, stride 2; H and W must be even. Ties route to the first maximum.
Tensor maxpool2x2(const Tensor& x);
void maxpool2x2_backward(Tensor& x, const Tensor& dy);

/// x: N x Cin, weight: Cout x Cin, bias: Cout.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
void linear_backward(Tensor& x, Tensor& weight, Tensor& bias, const Tensor& dy);

/// Along the last axis.
Tensor softmax(const Tensor& x);
void softmax_backward(Tensor& x, const Tensor& y, const Tensor& dy);

struct EAEConfig {
  std::array<int, 3> block_channels{16, 32, 64};
  int token_count = 4;
  int token_dim = 256;
  double layernorm_epsilon = 1e-6;

  void validate() const;
  friend bool operator==(const EAEConfig&, const EAEConfig&) = default;
};

struct BlockParams {
  Tensor conv_weight;
  Tensor conv_bias;
  Tensor norm_gain;
  Tensor norm_shift;
};

struct EAEParams {
  std::array<BlockParams, 3> blocks;
  Tensor head_weight;  ///< 1 x C3
  Tensor head_bias;    ///< 1
  Tensor proj_weight;  ///< token_dim x C3
  Tensor proj_bias;    ///< token_dim

  /// Seeded uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; norm gain 1, shift 0.
  static EAEParams init(const EAEConfig& config, std::uint64_t seed);

  /// Declaration order, which is also the checkpoint order.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  static std::vector<std::string> tensor_names();
  void zero_grad();
};

/// Channel 0 = I_H / 255, channel 1 = I_L / 255.
Tensor make_x0(const energy::DualEnergyPair& pair);

/// Intermediate values of one encoder pass, kept for backward.
struct EAETrace {
  Tensor input;
  std::array<Tensor, 3> block_input;
  std::array<Tensor, 3> conv;
  std::array<Tensor, 3> norm;
  std::array<Tensor, 3> act;
  std::array<Tensor, 3> pooled;
};

/// Three blocks of conv -> layernorm -> GELU -> maxpool. Input H and W divisible by 8.
Tensor eae_forward(const Tensor& x0, const EAEParams& params, const EAEConfig& config, EAETrace* trace = nullptr);

/// Accumulates parameter gradients into `params`; returns dL/dX0.
Tensor eae_backward(EAETrace& trace, EAEParams& params, const EAEConfig& config, const Tensor& d_x3);

struct TokenInit {
  Tensor embeddings;             ///< k x token_dim
  std::vector<int> indices;      ///< flat spatial indices, descending weight
  std::vector<double> weights;   ///< softmax over all positions
  std::vector<double> scores;    ///< pre-softmax head outputs
};

/// Channel-wise head -> softmax over positions -> top-k (ties by lowest index)
/// -> projection of the raw selected features.
TokenInit location_init(const Tensor& x3, const EAEParams& params, const EAEConfig& config);

/// Gradient flows through the selected embeddings and through every attention weight.
Tensor location_init_backward(const Tensor& x3, EAEParams& params, const TokenInit& out,
                              const Tensor& d_embeddings, std::span<const double> d_weights);

struct Checkpoint {
  EAEConfig config;
  EAEParams params;
};

/// Layout: 8-byte magic "XEAECKP1", u32 version, u32 x3 block widths, u32 token_count,
/// u32 token_dim, f64 epsilon, then every parameter tensor in declaration order as
/// little-endian f64. Integers are little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const EAEConfig& config, const EAEParams& params);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const EAEConfig& config, const EAEParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xannot::neural
