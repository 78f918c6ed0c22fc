#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wkd/tensor.hpp"

namespace wkd::tn {

enum class LayerKind : std::uint8_t {
  Conv3x3,          // pad 1, stride 1; weight [out, in, 3, 3], bias [out]
  MaxPool2x2,       // stride 2, requires even H and W
  Relu,
  Tanh,
  Linear,           // weight [out, in], bias [out]; input [B, in]
  AdaptiveAvgPool4, // [B, C, H, W] -> [B, C, 4, 4]
  Flatten,          // [B, ...] -> [B, prod(...)]
};

std::string kind_name(LayerKind k);
LayerKind kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t in = 0;   // input channels / features (conv, linear)
  std::size_t out = 0;  // output channels / features (conv, linear)

  static LayerSpec conv3x3(std::size_t in, std::size_t out) { return {LayerKind::Conv3x3, in, out}; }
  static LayerSpec linear(std::size_t in, std::size_t out) { return {LayerKind::Linear, in, out}; }
  static LayerSpec of(LayerKind k) { return {k, 0, 0}; }

  bool has_params() const { return kind == LayerKind::Conv3x3 || kind == LayerKind::Linear; }
  std::size_t fan_in() const { return kind == LayerKind::Conv3x3 ? in * 9 : in; }
  // Throws ShapeError when `input` is not a valid input for this layer.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Non-owning view of one trainable tensor.
template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T>* value;
};

template <typename T>
struct ConstParamRef {
  std::string name;
  const BasicTensor<T>* value;
};

// Activations retained by a recorded forward pass.
template <typename T>
struct Tape {
  std::vector<BasicTensor<T>> acts;                  // acts[0] = input, acts[i+1] = output of layer i
  std::vector<std::vector<std::uint32_t>> argmax;    // per layer; only MaxPool2x2 fills it
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> output;
  std::optional<Tape<T>> tape;
};

// A linear stack of layers with owned parameters.
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerSpec> specs);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return specs_.size(); }

  // Kaiming-uniform over fan-in for conv/linear weights, zero biases.
  void init_kaiming(std::mt19937_64& rng);

  std::vector<ParamRef<T>> parameters(const std::string& prefix = "");
  std::vector<ConstParamRef<T>> parameters(const std::string& prefix = "") const;
  std::size_t parameter_count() const;

  Shape output_shape(const Shape& input) const;

  ForwardResult<T> forward(const BasicTensor<T>& input, bool record_tape) const;

  // Accumulates parameter gradients into `grads` (aligned with parameters(),
  // one tensor per parameter, pre-shaped). Returns dL/dinput when
  // `want_input_grad`, otherwise an empty tensor.
  BasicTensor<T> backward(const Tape<T>& tape, const BasicTensor<T>& output_grad,
                          std::span<BasicTensor<T>> grads, bool want_input_grad) const;

  // Zero tensors shaped like parameters().
  std::vector<BasicTensor<T>> zero_grads() const;

  template <typename U>
  Sequential<U> cast() const {
    Sequential<U> s(specs_);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      s.weights_[i] = weights_[i].template cast<U>();
      s.biases_[i] = biases_[i].template cast<U>();
    }
    return s;
  }

 private:
  template <typename>
  friend class Sequential;

  std::vector<LayerSpec> specs_;
  std::vector<BasicTensor<T>> weights_;  // empty tensor for parameterless layers
  std::vector<BasicTensor<T>> biases_;
};

// Layer-level primitives, exposed for unit tests.
namespace ops {

template <typename T>
void conv3x3_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b,
                     BasicTensor<T>& out);
template <typename T>
void conv3x3_backward(const BasicTensor<T>& in, const BasicTensor<T>& w,
                      const BasicTensor<T>& dout, BasicTensor<T>& dw, BasicTensor<T>& db,
                      BasicTensor<T>* din);
template <typename T>
void linear_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b,
                    BasicTensor<T>& out);

}  // namespace ops

extern template class Sequential<float>;
extern template class Sequential<double>;

}  // namespace wkd::tn
