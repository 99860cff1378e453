#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topoforge/tensor.hpp"

namespace topoforge::nn {

// Spatial triples are ordered (depth, height, width) to match tensor axes
// [N, C, D, H, W]. Rank-2 layers keep depth extents at 1 and padding 0.
using Triple = std::array<int, 3>;

enum class LayerKind : std::uint8_t { Conv = 0, ConvTranspose = 1, MaxPool = 2, ReLU = 3 };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int rank = 2;
  int in_channels = 0;
  int out_channels = 0;
  Triple kernel{1, 1, 1};
  Triple stride{1, 1, 1};
  Triple padding{0, 0, 0};

  /// Conv with zero "same" padding (odd kernel, stride 1).
  static LayerSpec conv(int rank, int in, int out, int kernel = 3);
  /// Transposed conv whose kernel equals its per-axis stride (exact upsampling).
  static LayerSpec conv_transpose(int rank, int in, int out, Triple stride);
  static LayerSpec max_pool(int rank, int channels, Triple window);
  static LayerSpec relu(int rank, int channels);

  bool has_parameters() const { return kind == LayerKind::Conv || kind == LayerKind::ConvTranspose; }
  std::vector<std::size_t> weight_shape() const;
  /// Output spatial dims for given input spatial dims; throws ShapeMismatch.
  Triple output_dims(const Triple& in) const;
  void validate() const;

  bool operator==(const LayerSpec&) const = default;
};

// --- Stateless kernels. Tensors are [N, C, H, W] or [N, C, D, H, W]. ------

/// Cross-correlation; w is [Cout, Cin, k...], b is [Cout].
Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride, Triple padding);

struct ConvGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

ConvGrads conv_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Triple stride,
                        Triple padding, bool need_dx = true);

/// Transposed convolution; w is [Cin, Cout, k...]. Output spatial size is
/// (in - 1) * s + k - 2p.
Tensor conv_transpose_forward(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride,
                              Triple padding);

ConvGrads conv_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Triple stride,
                                  Triple padding, bool need_dx = true);

struct PoolResult {
  Tensor y;
  std::vector<std::size_t> argmax;  // flat index into x per output entry
};

/// Max pooling; ties go to the lowest linear index.
PoolResult maxpool_forward(const Tensor& x, Triple window, Triple stride);
Tensor maxpool_backward(const Tensor& dy, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& x_shape);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// Mean of squared differences over all entries.
double mse_loss(std::span<const double> pred, std::span<const double> target);
/// d mse / d pred.
std::vector<double> mse_grad(std::span<const double> pred, std::span<const double> target);

// --- Sequential layer stack. --------------------------------------------------

struct Layer {
  LayerSpec spec;
  Tensor weight;  // empty for parameter-free layers
  Tensor bias;
  bool frozen = false;
};

/// He-normal weights, zero bias.
Layer make_layer(const LayerSpec& spec, std::uint64_t seed);

struct ForwardTrace {
  std::vector<Tensor> inputs;                      // input of every layer
  std::vector<std::vector<std::size_t>> argmax;    // per layer, pools only
};

struct LayerGrads {
  Tensor dw;
  Tensor db;
};

class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Forward pass over layers [first, last). Records a trace when given.
  Tensor forward(const Tensor& x, ForwardTrace* trace = nullptr, std::size_t first = 0,
                 std::size_t last = static_cast<std::size_t>(-1)) const;
  /// Backpropagates dy through layers [first, first + trace.inputs.size()),
  /// accumulating into grads (one entry per layer). Frozen layers get no
  /// parameter gradient; input gradients stop at the first frozen layer when
  /// no earlier layer is trainable.
  void backward(const ForwardTrace& trace, Tensor dy, std::vector<LayerGrads>& grads,
                std::size_t first = 0) const;

  std::vector<LayerGrads> zero_grads() const;
  Triple output_dims(Triple in) const;
  int output_channels() const;
  std::size_t parameter_count() const;

 private:
  std::vector<Layer> layers_;
};

}  // namespace topoforge::nn
