#include "ltkd/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/rng.hpp"

namespace ltkd {
namespace {

constexpr char kMagic[8] = {'L', 'T', 'K', 'D', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError("checkpoint truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Mlp::Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ShapeError("Mlp needs at least input and output widths");
  for (std::size_t d : dims_)
    if (d == 0) throw ShapeError("Mlp layer width must be positive");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
    layers_.push_back({Matrix(dims_[l], dims_[l + 1]), Matrix(1, dims_[l + 1])});
}

Mlp Mlp::he_init(std::vector<std::size_t> dims, std::uint64_t seed) {
  Mlp m(std::move(dims));
  Rng rng = make_rng(seed, "he-init");
  for (auto& layer : m.layers_) {
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(layer.weight.rows())));
    for (double& w : layer.weight.values()) w = normal(rng);
  }
  return m;
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) n += (dims_[l] + 1) * dims_[l + 1];
  return n;
}

std::vector<Matrix*> Mlp::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Matrix*> Mlp::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  if (layers_.empty() || x.cols() != input_dim())
    throw ShapeError("Mlp::forward: input has " + std::to_string(x.cols()) + " features");
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add_row_bias(matmul(h, layers_[l].weight), layers_[l].bias);
    if (l + 1 < layers_.size()) h = relu(h);
  }
  require_finite(h, "Mlp::forward");
  return h;
}

MlpTrace Mlp::record(const Matrix& x) const {
  if (layers_.empty() || x.cols() != input_dim())
    throw ShapeError("Mlp::record: input has " + std::to_string(x.cols()) + " features");
  MlpTrace trace;
  Tape& tape = *trace.tape_;
  NodeId h = tape.constant(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const NodeId w = tape.variable(layers_[l].weight);
    const NodeId b = tape.variable(layers_[l].bias);
    trace.params_.push_back(w);
    trace.params_.push_back(b);
    h = tape.add_row_bias(tape.matmul(h, w), b);
    if (l + 1 < layers_.size()) h = tape.relu(h);
  }
  trace.logits_ = h;
  return trace;
}

std::vector<Matrix> MlpTrace::backward(const Matrix& dlogits) const {
  // sum(logits ∘ G) has gradient G with respect to the logits.
  Tape& tape = *tape_;
  const NodeId seed = tape.constant(dlogits);
  const NodeId loss = tape.sum(tape.hadamard(logits_, seed));
  const Gradients grads = tape.backward(loss);
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (NodeId p : params_) out.push_back(grads.wrt(p));
  return out;
}

std::uint64_t Mlp::checksum() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t d : dims_) mix(&d, sizeof d);
  for (const Matrix* p : parameters()) mix(p->data(), p->size() * sizeof(double));
  return h;
}

void Sgd::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ShapeError("Sgd::step: parameter/gradient count mismatch");
  if (velocity_.empty())
    for (Matrix* p : params) velocity_.emplace_back(p->rows(), p->cols());
  if (velocity_.size() != params.size()) throw ShapeError("Sgd::step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = *params[i];
    const Matrix& g = grads[i];
    Matrix& v = velocity_[i];
    if (g.rows() != w.rows() || g.cols() != w.cols() || v.rows() != w.rows() ||
        v.cols() != w.cols())
      throw ShapeError("Sgd::step: shape mismatch for parameter " + std::to_string(i));
    auto wv = w.values();
    auto gv = g.values();
    auto vv = v.values();
    for (std::size_t k = 0; k < wv.size(); ++k) {
      vv[k] = cfg_.momentum * vv[k] + (gv[k] + cfg_.weight_decay * wv[k]);
      wv[k] -= cfg_.lr * vv[k];
    }
  }
}

void save_checkpoint(const Mlp& m, const std::filesystem::path& path) {
  std::string buf(kMagic, sizeof kMagic);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.dims().size()));
  for (std::size_t d : m.dims()) put<std::uint64_t>(buf, d);
  for (const Matrix* p : m.parameters())
    buf.append(reinterpret_cast<const char*>(p->data()), p->size() * sizeof(double));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>();
  if (n < 2 || n > 64) throw FormatError("implausible layer count in checkpoint");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto d = r.get<std::uint64_t>();
    if (d == 0 || d > (1u << 24)) throw FormatError("implausible layer width in checkpoint");
    dims.push_back(static_cast<std::size_t>(d));
  }
  Mlp m(std::move(dims));
  for (Matrix* p : m.parameters()) {
    const std::string_view bytes = r.take(p->size() * sizeof(double));
    std::memcpy(p->data(), bytes.data(), bytes.size());
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return m;
}

Mlp load_checkpoint(const std::filesystem::path& path, std::span<const std::size_t> expected_dims) {
  Mlp m = load_checkpoint(path);
  if (!std::equal(m.dims().begin(), m.dims().end(), expected_dims.begin(), expected_dims.end()))
    throw ShapeError("checkpoint architecture does not match the requested one");
  return m;
}

}  // namespace ltkd
