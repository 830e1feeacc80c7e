// SPDX-License-Identifier: Apache-2.0
//
// Convolutional segment classifier: architecture descriptors, forward and
// backward passes over mini-batches, and model checkpoints.
//
// Activations are stored channel-fastest: a layer with C channels over an
// H x W grid and batch B is a C x (B*H*W) column-major matrix, so column
// j = (b*H + y)*W + x holds the channel vector of pixel (y, x) of example b.
// Flattening for the dense head is then a free reshape to (C*H*W) x B.

#ifndef EPR_NETWORK_HPP_
#define EPR_NETWORK_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epr/common.hpp"
#include "epr/distribution.hpp"
#include "epr/features.hpp"

namespace epr {

struct ConvBlock {
  int channels = 16;
  int n_convs = 1;  // 3x3 convolutions before the 2x2 max pool
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct Architecture {
  std::vector<ConvBlock> blocks;
  std::vector<int> dense;  // hidden dense widths before the K-way output

  /// Four single-conv blocks of width 16/32/64/64, no hidden dense layer.
  static Architecture compact();
  /// VGG configuration E: 64x2, 128x2, 256x4, 512x4, 512x4 then dense 4096, 4096.
  static Architecture vgg_e();
  /// Accepts "compact", "vgg-e" or "conv:16,32,64x2[;dense:128,64]".
  static Architecture parse(const std::string& descriptor);
  /// Canonical descriptor; parse(describe()) == *this.
  std::string describe() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class LayerKind { kConv, kPool, kDense };

struct LayerShape {
  LayerKind kind;
  int in_channels = 0;   // dense: input width
  int out_channels = 0;  // dense: output width
  int height = 0;        // input grid (conv/pool)
  int width = 0;
  bool relu = false;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Per-batch scratch buffers retained between forward() and backward().
struct Workspace {
  int batch = 0;
  std::vector<Matrix> inputs;                    // input activation of every layer
  std::vector<std::vector<std::int32_t>> argmax; // pool winners, per pool layer
};

enum class LossKind { kCrossEntropy, kKlDivergence };

class Network {
 public:
  Network(const Architecture& arch, int n_classes, int input_rows = 64, int input_cols = 32);

  std::size_t param_count() const { return n_params_; }
  int n_classes() const { return n_classes_; }
  int input_rows() const { return input_rows_; }
  int input_cols() const { return input_cols_; }
  const std::vector<LayerShape>& layers() const { return layers_; }

  /// Fan-in scaled Gaussian weights (std = sqrt(2 / fan_in)), zero biases.
  std::vector<double> init_params(std::uint64_t seed) const;

  /// Packs segments into the 1 x (B*rows*cols) input layout.
  Matrix pack(std::span<const Segment* const> batch) const;

  /// Returns logits, K x B. Fills ws when non-null so backward() can run.
  Matrix forward(std::span<const double> params, const Matrix& input, int batch, Workspace* ws) const;

  /// Back-propagates dL/dlogits (K x B); overwrites grad (size param_count()).
  void backward(std::span<const double> params, const Matrix& dlogits, Workspace& ws,
                std::vector<double>& grad) const;

  /// Mean loss over the batch and its parameter gradient. Cross-entropy uses
  /// the fused softmax gradient (p - t); KL goes through dL/dp = -t/p and the
  /// softmax Jacobian. The two gradients coincide analytically.
  double loss_and_gradient(std::span<const double> params, const Matrix& input,
                           std::span<const EmotionDistribution> targets, LossKind kind,
                           std::vector<double>& grad) const;

  /// Mean loss only.
  double loss(std::span<const double> params, const Matrix& input,
              std::span<const EmotionDistribution> targets, LossKind kind) const;

 private:
  int n_classes_;
  int input_rows_;
  int input_cols_;
  std::size_t n_params_ = 0;
  std::vector<LayerShape> layers_;
};

/// A trained refinery network C_t. Immutable after training; safe to share
/// across threads for prediction.
struct Model {
  Architecture arch;
  int n_classes = 0;
  std::vector<std::string> class_names;
  int generation = 1;
  std::uint64_t seed = 0;
  int input_rows = 64;
  int input_cols = 32;
  std::vector<double> params;

  Network network() const { return Network(arch, n_classes, input_rows, input_cols); }
};

EmotionDistribution predict(const Model& m, const Segment& s);
/// Batched prediction in input order.
std::vector<EmotionDistribution> predict_batch(const Model& m, std::span<const Segment> segments);

/// Binary checkpoint: "EPRMODEL" magic, u32 version, u64 header length, JSON
/// header (architecture, K, class names, generation, seed, input shape,
/// parameter count), then little-endian IEEE-754 doubles. Loading is bit-exact.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace epr

#endif  // EPR_NETWORK_HPP_
