#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "ltkd/autodiff.hpp"
#include "ltkd/matrix.hpp"

namespace ltkd {

struct DenseLayer {
  Matrix weight;  // d_in x d_out
  Matrix bias;    // 1 x d_out

  bool operator==(const DenseLayer&) const = default;
};

class MlpTrace;

/// ReLU multilayer perceptron with a linear output layer producing logits.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network with the given layer widths [D, h1, ..., C].
  explicit Mlp(std::vector<std::size_t> dims);
  /// He-normal weights, zero biases, drawn from `seed`.
  static Mlp he_init(std::vector<std::size_t> dims, std::uint64_t seed);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_classes() const { return dims_.back(); }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// sum over layers of (d_in + 1) * d_out
  std::size_t parameter_count() const noexcept;
  /// Weights and biases in layer order: W0, b0, W1, b1, ...
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  /// Inference forward pass; throws ShapeError if x.cols() != input_dim().
  Matrix forward(const Matrix& x) const;
  /// Forward pass recorded on a tape for backpropagation.
  MlpTrace record(const Matrix& x) const;

  /// FNV-1a over dims and parameter bytes.
  std::uint64_t checksum() const noexcept;

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

/// A recorded forward pass. Gradients of any loss L(logits) follow from dL/dlogits.
class MlpTrace {
 public:
  const Matrix& logits() const { return tape_->value(logits_); }
  /// Parameter gradients (aligned with Mlp::parameters()) given dL/dlogits.
  std::vector<Matrix> backward(const Matrix& dlogits) const;

 private:
  friend class Mlp;
  std::unique_ptr<Tape> tape_ = std::make_unique<Tape>();
  NodeId logits_;
  std::vector<NodeId> params_;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  const SgdConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  const std::vector<Matrix>& velocity() const noexcept { return velocity_; }

  /// Throws ShapeError if grads and params disagree in count or shape.
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

 private:
  SgdConfig cfg_;
  std::vector<Matrix> velocity_;
};

/// Binary checkpoint: "LTKDCKPT", u32 version, u32 layer-width count, u64
/// widths, then each layer's weight and bias as row-major little-endian float64.
void save_checkpoint(const Mlp& m, const std::filesystem::path& path);
/// Throws FormatError on bad magic/version/size.
Mlp load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, but throws ShapeError unless the widths equal `expected_dims`.
Mlp load_checkpoint(const std::filesystem::path& path, std::span<const std::size_t> expected_dims);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace ltkd
