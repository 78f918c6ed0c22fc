#include "wkd/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wkd/kernels/kernels.hpp"

namespace wkd::tn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3:
      return "conv3x3";
    case LayerKind::MaxPool2x2:
      return "maxpool2x2";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::Tanh:
      return "tanh";
    case LayerKind::Linear:
      return "linear";
    case LayerKind::AdaptiveAvgPool4:
      return "adaptive_avgpool4";
    case LayerKind::Flatten:
      return "flatten";
  }
  return "unknown";
}

LayerKind kind_from_name(const std::string& name) {
  for (auto k : {LayerKind::Conv3x3, LayerKind::MaxPool2x2, LayerKind::Relu, LayerKind::Tanh,
                 LayerKind::Linear, LayerKind::AdaptiveAvgPool4, LayerKind::Flatten}) {
    if (kind_name(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

Shape LayerSpec::output_shape(const Shape& input) const {
  auto fail = [&](const std::string& why) {
    throw ShapeError(kind_name(kind) + ": input " + shape_str(input) + " " + why);
  };
  switch (kind) {
    case LayerKind::Conv3x3:
      if (input.size() != 4) fail("must be rank 4 [B,C,H,W]");
      if (input[1] != in) fail("has " + std::to_string(input[1]) + " channels, expected " + std::to_string(in));
      return {input[0], out, input[2], input[3]};
    case LayerKind::MaxPool2x2:
      if (input.size() != 4) fail("must be rank 4 [B,C,H,W]");
      if (input[2] % 2 || input[3] % 2) fail("needs even spatial dims");
      return {input[0], input[1], input[2] / 2, input[3] / 2};
    case LayerKind::Relu:
    case LayerKind::Tanh:
      return input;
    case LayerKind::Linear:
      if (input.size() != 2) fail("must be rank 2 [B,F]");
      if (input[1] != in) fail("has " + std::to_string(input[1]) + " features, expected " + std::to_string(in));
      return {input[0], out};
    case LayerKind::AdaptiveAvgPool4:
      if (input.size() != 4) fail("must be rank 4 [B,C,H,W]");
      if (input[2] < 4 || input[3] < 4) fail("spatial dims must be >= 4");
      return {input[0], input[1], 4, 4};
    case LayerKind::Flatten: {
      if (input.size() < 2) fail("must have a batch dimension and at least one more");
      std::size_t f = 1;
      for (std::size_t i = 1; i < input.size(); ++i) f *= input[i];
      return {input[0], f};
    }
  }
  fail("unknown layer");
  return {};
}

namespace ops {

namespace {

template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, T* col) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = col + ((c * 9) + ky * 3 + kx) * HW;
        const T* src = img + c * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          T* dst = row + y * W;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          const T* s = src + static_cast<std::size_t>(sy) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            dst[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? T(0) : s[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, T* img) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = col + ((c * 9) + ky * 3 + kx) * HW;
        T* dst = img + c * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          T* d = dst + static_cast<std::size_t>(sy) * W;
          const T* r = row + y * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) d[sx] += r[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv3x3_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b,
                     BasicTensor<T>& out) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = w.dim(0), K = C * 9, HW = H * W;
  out = BasicTensor<T>({B, O, H, W});
  std::vector<T> col(K * HW);
  for (std::size_t n = 0; n < B; ++n) {
    im2col(in.ptr() + n * C * HW, C, H, W, col.data());
    T* o = out.ptr() + n * O * HW;
    for (std::size_t oc = 0; oc < O; ++oc) std::fill(o + oc * HW, o + (oc + 1) * HW, b[oc]);
    kernels::gemm_nn_t<T>(O, HW, K, w.ptr(), K, col.data(), HW, o, HW);
  }
}

template <typename T>
void conv3x3_backward(const BasicTensor<T>& in, const BasicTensor<T>& w,
                      const BasicTensor<T>& dout, BasicTensor<T>& dw, BasicTensor<T>& db,
                      BasicTensor<T>* din) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = w.dim(0), K = C * 9, HW = H * W;
  std::vector<T> col(K * HW);
  std::vector<T> dcol;
  if (din) {
    *din = BasicTensor<T>(in.shape());
    dcol.resize(K * HW);
  }
  for (std::size_t n = 0; n < B; ++n) {
    const T* g = dout.ptr() + n * O * HW;
    im2col(in.ptr() + n * C * HW, C, H, W, col.data());
    kernels::gemm_nt_t<T>(O, K, HW, g, HW, col.data(), HW, dw.ptr(), K);
    for (std::size_t oc = 0; oc < O; ++oc) {
      T s = T(0);
      for (std::size_t i = 0; i < HW; ++i) s += g[oc * HW + i];
      db[oc] += s;
    }
    if (din) {
      std::fill(dcol.begin(), dcol.end(), T(0));
      kernels::gemm_tn_t<T>(K, HW, O, w.ptr(), K, g, HW, dcol.data(), HW);
      col2im_add(dcol.data(), C, H, W, din->ptr() + n * C * HW);
    }
  }
}

template <typename T>
void linear_forward(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b,
                    BasicTensor<T>& out) {
  const std::size_t B = in.dim(0), F = in.dim(1), O = w.dim(0);
  out = BasicTensor<T>({B, O});
  for (std::size_t n = 0; n < B; ++n) std::copy(b.ptr(), b.ptr() + O, out.ptr() + n * O);
  kernels::gemm_nt_t<T>(B, O, F, in.ptr(), F, w.ptr(), F, out.ptr(), O);
}

template void conv3x3_forward<float>(const Tensor&, const Tensor&, const Tensor&, Tensor&);
template void conv3x3_forward<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                      const BasicTensor<double>&, BasicTensor<double>&);
template void conv3x3_backward<float>(const Tensor&, const Tensor&, const Tensor&, Tensor&,
                                      Tensor&, Tensor*);
template void conv3x3_backward<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                       const BasicTensor<double>&, BasicTensor<double>&,
                                       BasicTensor<double>&, BasicTensor<double>*);
template void linear_forward<float>(const Tensor&, const Tensor&, const Tensor&, Tensor&);
template void linear_forward<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                     const BasicTensor<double>&, BasicTensor<double>&);

}  // namespace ops

namespace {

template <typename T>
std::pair<std::size_t, std::size_t> pool_range(std::size_t i, std::size_t in) {
  const std::size_t lo = (i * in) / 4;
  const std::size_t hi = ((i + 1) * in + 3) / 4;
  return {lo, hi};
}

template <typename T>
void avgpool4_forward(const BasicTensor<T>& in, BasicTensor<T>& out) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  out = BasicTensor<T>({B, C, 4, 4});
  for (std::size_t p = 0; p < B * C; ++p) {
    const T* src = in.ptr() + p * H * W;
    T* dst = out.ptr() + p * 16;
    for (std::size_t oy = 0; oy < 4; ++oy) {
      const auto [y0, y1] = pool_range<T>(oy, H);
      for (std::size_t ox = 0; ox < 4; ++ox) {
        const auto [x0, x1] = pool_range<T>(ox, W);
        T s = T(0);
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) s += src[y * W + x];
        dst[oy * 4 + ox] = s / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void avgpool4_backward(const Shape& in_shape, const BasicTensor<T>& dout, BasicTensor<T>& din) {
  const std::size_t B = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  din = BasicTensor<T>(in_shape);
  for (std::size_t p = 0; p < B * C; ++p) {
    const T* g = dout.ptr() + p * 16;
    T* dst = din.ptr() + p * H * W;
    for (std::size_t oy = 0; oy < 4; ++oy) {
      const auto [y0, y1] = pool_range<T>(oy, H);
      for (std::size_t ox = 0; ox < 4; ++ox) {
        const auto [x0, x1] = pool_range<T>(ox, W);
        const T share = g[oy * 4 + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) dst[y * W + x] += share;
      }
    }
  }
}

template <typename T>
void maxpool_forward(const BasicTensor<T>& in, BasicTensor<T>& out, std::vector<std::uint32_t>* argmax) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t OH = H / 2, OW = W / 2;
  out = BasicTensor<T>({B, C, OH, OW});
  if (argmax) argmax->resize(out.size());
  for (std::size_t p = 0; p < B * C; ++p) {
    const T* src = in.ptr() + p * H * W;
    T* dst = out.ptr() + p * OH * OW;
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t x = 0; x < OW; ++x) {
        std::size_t best = (2 * y) * W + 2 * x;
        for (std::size_t idx : {(2 * y) * W + 2 * x + 1, (2 * y + 1) * W + 2 * x,
                                (2 * y + 1) * W + 2 * x + 1}) {
          if (src[idx] > src[best]) best = idx;
        }
        dst[y * OW + x] = src[best];
        if (argmax) (*argmax)[p * OH * OW + y * OW + x] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax,
                      const BasicTensor<T>& dout, BasicTensor<T>& din) {
  const std::size_t H = in_shape[2], W = in_shape[3];
  const std::size_t plane_out = (H / 2) * (W / 2);
  din = BasicTensor<T>(in_shape);
  for (std::size_t i = 0; i < dout.size(); ++i) {
    const std::size_t p = i / plane_out;
    din[p * H * W + argmax[i]] += dout[i];
  }
}

}  // namespace

template <typename T>
Sequential<T>::Sequential(std::vector<LayerSpec> specs) : specs_(std::move(specs)) {
  weights_.resize(specs_.size());
  biases_.resize(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    if (s.kind == LayerKind::Conv3x3) {
      weights_[i] = BasicTensor<T>({s.out, s.in, 3, 3});
      biases_[i] = BasicTensor<T>({s.out});
    } else if (s.kind == LayerKind::Linear) {
      weights_[i] = BasicTensor<T>({s.out, s.in});
      biases_[i] = BasicTensor<T>({s.out});
    }
  }
}

template <typename T>
void Sequential<T>::init_kaiming(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].has_params()) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(specs_[i].fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weights_[i].data()) v = static_cast<T>(dist(rng));
    biases_[i].fill(T(0));
  }
}

template <typename T>
std::vector<ParamRef<T>> Sequential<T>::parameters(const std::string& prefix) {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].has_params()) continue;
    out.push_back({prefix + std::to_string(i) + ".weight", &weights_[i]});
    out.push_back({prefix + std::to_string(i) + ".bias", &biases_[i]});
  }
  return out;
}

template <typename T>
std::vector<ConstParamRef<T>> Sequential<T>::parameters(const std::string& prefix) const {
  std::vector<ConstParamRef<T>> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].has_params()) continue;
    out.push_back({prefix + std::to_string(i) + ".weight", &weights_[i]});
    out.push_back({prefix + std::to_string(i) + ".bias", &biases_[i]});
  }
  return out;
}

template <typename T>
std::size_t Sequential<T>::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) n += weights_[i].size() + biases_[i].size();
  return n;
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& spec : specs_) s = spec.output_shape(s);
  return s;
}

template <typename T>
std::vector<BasicTensor<T>> Sequential<T>::zero_grads() const {
  std::vector<BasicTensor<T>> g;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!specs_[i].has_params()) continue;
    g.emplace_back(weights_[i].shape());
    g.emplace_back(biases_[i].shape());
  }
  return g;
}

template <typename T>
ForwardResult<T> Sequential<T>::forward(const BasicTensor<T>& input, bool record_tape) const {
  ForwardResult<T> result;
  if (record_tape) {
    result.tape.emplace();
    result.tape->acts.reserve(specs_.size() + 1);
    result.tape->acts.push_back(input);
    result.tape->argmax.resize(specs_.size());
  }
  BasicTensor<T> cur = input;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& spec = specs_[i];
    const Shape out_shape = spec.output_shape(cur.shape());
    BasicTensor<T> next;
    switch (spec.kind) {
      case LayerKind::Conv3x3:
        ops::conv3x3_forward(cur, weights_[i], biases_[i], next);
        break;
      case LayerKind::MaxPool2x2:
        maxpool_forward(cur, next, record_tape ? &result.tape->argmax[i] : nullptr);
        break;
      case LayerKind::Relu:
        next = cur;
        for (auto& v : next.data()) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::Tanh:
        next = cur;
        for (auto& v : next.data()) v = std::tanh(v);
        break;
      case LayerKind::Linear:
        ops::linear_forward(cur, weights_[i], biases_[i], next);
        break;
      case LayerKind::AdaptiveAvgPool4:
        avgpool4_forward(cur, next);
        break;
      case LayerKind::Flatten:
        next = cur;
        next.reshape(out_shape);
        break;
    }
    if (!next.all_finite()) {
      throw NumericError("non-finite value after layer " + std::to_string(i) + " (" +
                         kind_name(spec.kind) + ")");
    }
    if (record_tape) result.tape->acts.push_back(next);
    cur = std::move(next);
  }
  result.output = std::move(cur);
  return result;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const Tape<T>& tape, const BasicTensor<T>& output_grad,
                                       std::span<BasicTensor<T>> grads,
                                       bool want_input_grad) const {
  if (tape.acts.size() != specs_.size() + 1) {
    throw UsageError("backward needs a tape recorded by forward(..., record_tape=true)");
  }
  if (output_grad.shape() != tape.acts.back().shape()) {
    throw ShapeError("output grad " + shape_str(output_grad.shape()) + " does not match output " +
                     shape_str(tape.acts.back().shape()));
  }
  std::size_t param_slot = 0;
  for (const auto& s : specs_) param_slot += s.has_params() ? 2 : 0;
  if (grads.size() != param_slot) throw UsageError("gradient buffer count mismatch");

  BasicTensor<T> g = output_grad;
  for (std::size_t li = specs_.size(); li-- > 0;) {
    const LayerSpec& spec = specs_[li];
    const BasicTensor<T>& in = tape.acts[li];
    const BasicTensor<T>& out = tape.acts[li + 1];
    const bool need_din = want_input_grad || li > 0;
    BasicTensor<T> din;
    switch (spec.kind) {
      case LayerKind::Conv3x3: {
        param_slot -= 2;
        ops::conv3x3_backward(in, weights_[li], g, grads[param_slot], grads[param_slot + 1],
                              need_din ? &din : nullptr);
        break;
      }
      case LayerKind::Linear: {
        param_slot -= 2;
        const std::size_t B = in.dim(0), F = in.dim(1), O = spec.out;
        kernels::gemm_tn_t<T>(O, F, B, g.ptr(), O, in.ptr(), F, grads[param_slot].ptr(), F);
        auto& db = grads[param_slot + 1];
        for (std::size_t n = 0; n < B; ++n)
          for (std::size_t o = 0; o < O; ++o) db[o] += g[n * O + o];
        if (need_din) {
          din = BasicTensor<T>(in.shape());
          kernels::gemm_nn_t<T>(B, F, O, g.ptr(), O, weights_[li].ptr(), F, din.ptr(), F);
        }
        break;
      }
      case LayerKind::MaxPool2x2:
        if (need_din) maxpool_backward(in.shape(), tape.argmax[li], g, din);
        break;
      case LayerKind::Relu:
        if (need_din) {
          din = g;
          for (std::size_t i = 0; i < din.size(); ++i)
            if (!(in[i] > T(0))) din[i] = T(0);
        }
        break;
      case LayerKind::Tanh:
        if (need_din) {
          din = g;
          for (std::size_t i = 0; i < din.size(); ++i) din[i] *= T(1) - out[i] * out[i];
        }
        break;
      case LayerKind::AdaptiveAvgPool4:
        if (need_din) avgpool4_backward(in.shape(), g, din);
        break;
      case LayerKind::Flatten:
        if (need_din) {
          din = g;
          din.reshape(in.shape());
        }
        break;
    }
    if (!need_din) break;
    g = std::move(din);
  }
  for (const auto& t : grads) {
    if (!t.all_finite()) throw NumericError("non-finite parameter gradient");
  }
  if (!want_input_grad) return {};
  if (!g.all_finite()) throw NumericError("non-finite input gradient");
  return g;
}

template class Sequential<float>;
template class Sequential<double>;

}  // namespace wkd::tn
