#include "topoforge/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "topoforge/error.hpp"

namespace topoforge::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// [N, C, D, H, W] view of a 4D or 5D activation tensor.
struct Dims5 {
  std::size_t n, c;
  Triple s;
  std::size_t spatial() const {
    return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) * static_cast<std::size_t>(s[2]);
  }
};

Dims5 dims5(const Tensor& t, const char* what) {
  const auto& sh = t.shape();
  if (sh.size() == 4) return {sh[0], sh[1], {1, static_cast<int>(sh[2]), static_cast<int>(sh[3])}};
  if (sh.size() == 5) {
    return {sh[0], sh[1], {static_cast<int>(sh[2]), static_cast<int>(sh[3]), static_cast<int>(sh[4])}};
  }
  fail(ErrorCode::ShapeMismatch, std::string(what) + " must have 4 or 5 axes, got " + shape_string(sh));
}

// Kernel extent triple of a 4D/5D weight tensor [A, B, (kd,) kh, kw].
Triple kernel_of(const Tensor& w) {
  const auto& sh = w.shape();
  if (sh.size() == 4) return {1, static_cast<int>(sh[2]), static_cast<int>(sh[3])};
  if (sh.size() == 5) return {static_cast<int>(sh[2]), static_cast<int>(sh[3]), static_cast<int>(sh[4])};
  fail(ErrorCode::ShapeMismatch, "weight must have 4 or 5 axes, got " + shape_string(sh));
}

std::vector<std::size_t> make_shape(std::size_t rank, std::size_t n, std::size_t c, const Triple& s) {
  if (rank == 4) return {n, c, static_cast<std::size_t>(s[1]), static_cast<std::size_t>(s[2])};
  return {n, c, static_cast<std::size_t>(s[0]), static_cast<std::size_t>(s[1]), static_cast<std::size_t>(s[2])};
}

std::size_t volume(const Triple& t) {
  return static_cast<std::size_t>(t[0]) * static_cast<std::size_t>(t[1]) * static_cast<std::size_t>(t[2]);
}

// Sliding-window geometry: `image` is the padded-input side, `pos` the
// window-position side (conv output / transposed-conv input).
struct Geometry {
  Triple image, pos, k, s, p;
};

Triple conv_out(const Triple& in, const Triple& k, const Triple& s, const Triple& p) {
  Triple out{};
  for (int a = 0; a < 3; ++a) {
    if (k[a] < 1 || s[a] < 1 || p[a] < 0) fail(ErrorCode::ShapeMismatch, "invalid kernel/stride/padding");
    const int span = in[a] + 2 * p[a] - k[a];
    if (span < 0) fail(ErrorCode::ShapeMismatch, "kernel larger than padded input");
    out[a] = span / s[a] + 1;
  }
  return out;
}

// cols[(c, kd, kh, kw), position] = image[c, pos * s - p + k] (0 outside).
void im2col(const double* img, std::size_t channels, const Geometry& g, double* cols) {
  const std::size_t positions = volume(g.pos);
  const std::size_t img_size = volume(g.image);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = img + c * img_size;
    for (int kd = 0; kd < g.k[0]; ++kd)
      for (int kh = 0; kh < g.k[1]; ++kh)
        for (int kw = 0; kw < g.k[2]; ++kw, ++row) {
          double* dst = cols + row * positions;
          std::size_t q = 0;
          for (int od = 0; od < g.pos[0]; ++od) {
            const int id = od * g.s[0] - g.p[0] + kd;
            const bool dok = id >= 0 && id < g.image[0];
            for (int oh = 0; oh < g.pos[1]; ++oh) {
              const int ih = oh * g.s[1] - g.p[1] + kh;
              const bool hok = dok && ih >= 0 && ih < g.image[1];
              const double* line = hok ? src + (static_cast<std::size_t>(id) * g.image[1] + ih) * g.image[2] : nullptr;
              for (int ow = 0; ow < g.pos[2]; ++ow, ++q) {
                const int iw = ow * g.s[2] - g.p[2] + kw;
                dst[q] = (hok && iw >= 0 && iw < g.image[2]) ? line[iw] : 0.0;
              }
            }
          }
        }
  }
}

// Adjoint of im2col: image[c, pos * s - p + k] += cols[(c, k), position].
void col2im(const double* cols, std::size_t channels, const Geometry& g, double* img) {
  const std::size_t positions = volume(g.pos);
  const std::size_t img_size = volume(g.image);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = img + c * img_size;
    for (int kd = 0; kd < g.k[0]; ++kd)
      for (int kh = 0; kh < g.k[1]; ++kh)
        for (int kw = 0; kw < g.k[2]; ++kw, ++row) {
          const double* src = cols + row * positions;
          std::size_t q = 0;
          for (int od = 0; od < g.pos[0]; ++od) {
            const int id = od * g.s[0] - g.p[0] + kd;
            const bool dok = id >= 0 && id < g.image[0];
            for (int oh = 0; oh < g.pos[1]; ++oh) {
              const int ih = oh * g.s[1] - g.p[1] + kh;
              const bool hok = dok && ih >= 0 && ih < g.image[1];
              double* line = hok ? dst + (static_cast<std::size_t>(id) * g.image[1] + ih) * g.image[2] : nullptr;
              for (int ow = 0; ow < g.pos[2]; ++ow, ++q) {
                const int iw = ow * g.s[2] - g.p[2] + kw;
                if (hok && iw >= 0 && iw < g.image[2]) line[iw] += src[q];
              }
            }
          }
        }
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv_transpose";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::ReLU: return "relu";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(int rank, int in, int out, int kernel) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.rank = rank;
  s.in_channels = in;
  s.out_channels = out;
  const int pad = (kernel - 1) / 2;
  s.kernel = rank == 3 ? Triple{kernel, kernel, kernel} : Triple{1, kernel, kernel};
  s.padding = rank == 3 ? Triple{pad, pad, pad} : Triple{0, pad, pad};
  return s;
}

LayerSpec LayerSpec::conv_transpose(int rank, int in, int out, Triple stride) {
  LayerSpec s;
  s.kind = LayerKind::ConvTranspose;
  s.rank = rank;
  s.in_channels = in;
  s.out_channels = out;
  if (rank == 2) stride[0] = 1;
  s.kernel = stride;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::max_pool(int rank, int channels, Triple window) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.rank = rank;
  s.in_channels = channels;
  s.out_channels = channels;
  if (rank == 2) window[0] = 1;
  s.kernel = window;
  s.stride = window;
  return s;
}

LayerSpec LayerSpec::relu(int rank, int channels) {
  LayerSpec s;
  s.kind = LayerKind::ReLU;
  s.rank = rank;
  s.in_channels = channels;
  s.out_channels = channels;
  return s;
}

void LayerSpec::validate() const {
  if (rank != 2 && rank != 3) fail(ErrorCode::ShapeMismatch, "layer rank must be 2 or 3");
  if (in_channels < 1 || out_channels < 1) fail(ErrorCode::ShapeMismatch, "channel counts must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1 || stride[a] < 1 || padding[a] < 0) {
      fail(ErrorCode::ShapeMismatch, "kernel and stride must be >= 1, padding >= 0");
    }
  }
  if (rank == 2 && (kernel[0] != 1 || stride[0] != 1 || padding[0] != 0)) {
    fail(ErrorCode::ShapeMismatch, "rank-2 layer with a depth extent");
  }
  if ((kind == LayerKind::MaxPool || kind == LayerKind::ReLU) && in_channels != out_channels) {
    fail(ErrorCode::ShapeMismatch, "pool/activation layers keep channel count");
  }
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
  const auto k = [&](int a) { return static_cast<std::size_t>(kernel[a]); };
  if (kind == LayerKind::Conv) {
    return {static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels), k(0), k(1), k(2)};
  }
  if (kind == LayerKind::ConvTranspose) {
    return {static_cast<std::size_t>(in_channels), static_cast<std::size_t>(out_channels), k(0), k(1), k(2)};
  }
  return {};
}

Triple LayerSpec::output_dims(const Triple& in) const {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::MaxPool:
      return conv_out(in, kernel, stride, padding);
    case LayerKind::ConvTranspose: {
      Triple out{};
      for (int a = 0; a < 3; ++a) out[a] = (in[a] - 1) * stride[a] + kernel[a] - 2 * padding[a];
      for (int a = 0; a < 3; ++a) {
        if (out[a] < 1) fail(ErrorCode::ShapeMismatch, "transposed conv output is empty");
      }
      return out;
    }
    case LayerKind::ReLU:
      return in;
  }
  return in;
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride, Triple padding) {
  const Dims5 xd = dims5(x, "conv input");
  const Triple k = kernel_of(w);
  const std::size_t cout = w.dim(0);
  const std::size_t cin = w.dim(1);
  if (cin != xd.c) {
    fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(cin) + " input channels, got " +
                                       std::to_string(xd.c));
  }
  if (b.size() != cout) fail(ErrorCode::ShapeMismatch, "conv bias size");
  const Triple out = conv_out(xd.s, k, stride, padding);
  const Geometry g{xd.s, out, k, stride, padding};
  const std::size_t kk = cin * volume(k);
  const std::size_t positions = volume(out);
  Tensor y(make_shape(x.rank(), xd.n, cout, out));
  Buffer cols(kk * positions);
  const ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
  for (std::size_t n = 0; n < xd.n; ++n) {
    im2col(x.data() + n * cin * xd.spatial(), cin, g, cols.data());
    const ConstMapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(positions));
    MapMat ym(y.data() + n * cout * positions, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(positions));
    ym.noalias() = wm * cm;
    for (std::size_t c = 0; c < cout; ++c) ym.row(static_cast<Eigen::Index>(c)).array() += b[c];
  }
  return y;
}

ConvGrads conv_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Triple stride,
                        Triple padding, bool need_dx) {
  const Dims5 xd = dims5(x, "conv input");
  const Triple k = kernel_of(w);
  const std::size_t cout = w.dim(0);
  const std::size_t cin = w.dim(1);
  const Triple out = conv_out(xd.s, k, stride, padding);
  const Dims5 yd = dims5(dy, "conv output gradient");
  if (yd.n != xd.n || yd.c != cout || yd.s != out) fail(ErrorCode::ShapeMismatch, "conv gradient shape");
  const Geometry g{xd.s, out, k, stride, padding};
  const std::size_t kk = cin * volume(k);
  const std::size_t positions = volume(out);
  ConvGrads grads{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(w.shape()), Tensor({cout})};
  Buffer cols(kk * positions);
  const ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
  MapMat dwm(grads.dw.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
  for (std::size_t n = 0; n < xd.n; ++n) {
    im2col(x.data() + n * cin * xd.spatial(), cin, g, cols.data());
    const ConstMapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(positions));
    const ConstMapMat dym(dy.data() + n * cout * positions, static_cast<Eigen::Index>(cout),
                          static_cast<Eigen::Index>(positions));
    dwm.noalias() += dym * cm.transpose();
    for (std::size_t c = 0; c < cout; ++c) grads.db[c] += dym.row(static_cast<Eigen::Index>(c)).sum();
    if (need_dx) {
      MapMat colm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(positions));
      colm.noalias() = wm.transpose() * dym;
      col2im(cols.data(), cin, g, grads.dx.data() + n * cin * xd.spatial());
    }
  }
  return grads;
}

Tensor conv_transpose_forward(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride,
                              Triple padding) {
  const Dims5 xd = dims5(x, "transposed conv input");
  const Triple k = kernel_of(w);
  const std::size_t cin = w.dim(0);
  const std::size_t cout = w.dim(1);
  if (cin != xd.c) fail(ErrorCode::ShapeMismatch, "transposed conv input channels");
  if (b.size() != cout) fail(ErrorCode::ShapeMismatch, "transposed conv bias size");
  Triple out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (xd.s[a] - 1) * stride[a] + k[a] - 2 * padding[a];
    if (out[a] < 1) fail(ErrorCode::ShapeMismatch, "transposed conv output is empty");
  }
  const Geometry g{out, xd.s, k, stride, padding};
  const std::size_t kk = cout * volume(k);
  const std::size_t positions = xd.spatial();
  const std::size_t out_size = volume(out);
  Tensor y(make_shape(x.rank(), xd.n, cout, out));
  Buffer cols(kk * positions);
  const ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(kk));
  for (std::size_t n = 0; n < xd.n; ++n) {
    const ConstMapMat xm(x.data() + n * cin * positions, static_cast<Eigen::Index>(cin),
                         static_cast<Eigen::Index>(positions));
    MapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(positions));
    cm.noalias() = wm.transpose() * xm;
    double* yn = y.data() + n * cout * out_size;
    col2im(cols.data(), cout, g, yn);
    for (std::size_t c = 0; c < cout; ++c) {
      double* row = yn + c * out_size;
      for (std::size_t q = 0; q < out_size; ++q) row[q] += b[c];
    }
  }
  return y;
}

ConvGrads conv_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Triple stride,
                                  Triple padding, bool need_dx) {
  const Dims5 xd = dims5(x, "transposed conv input");
  const Triple k = kernel_of(w);
  const std::size_t cin = w.dim(0);
  const std::size_t cout = w.dim(1);
  const Dims5 yd = dims5(dy, "transposed conv output gradient");
  Triple out{};
  for (int a = 0; a < 3; ++a) out[a] = (xd.s[a] - 1) * stride[a] + k[a] - 2 * padding[a];
  if (yd.n != xd.n || yd.c != cout || yd.s != out) fail(ErrorCode::ShapeMismatch, "transposed conv gradient shape");
  const Geometry g{out, xd.s, k, stride, padding};
  const std::size_t kk = cout * volume(k);
  const std::size_t positions = xd.spatial();
  const std::size_t out_size = volume(out);
  ConvGrads grads{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(w.shape()), Tensor({cout})};
  Buffer cols(kk * positions);
  const ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(kk));
  MapMat dwm(grads.dw.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(kk));
  for (std::size_t n = 0; n < xd.n; ++n) {
    const double* dyn = dy.data() + n * cout * out_size;
    im2col(dyn, cout, g, cols.data());
    const ConstMapMat cm(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(positions));
    const ConstMapMat xm(x.data() + n * cin * positions, static_cast<Eigen::Index>(cin),
                         static_cast<Eigen::Index>(positions));
    dwm.noalias() += xm * cm.transpose();
    for (std::size_t c = 0; c < cout; ++c) {
      const double* row = dyn + c * out_size;
      double acc = 0.0;
      for (std::size_t q = 0; q < out_size; ++q) acc += row[q];
      grads.db[c] += acc;
    }
    if (need_dx) {
      MapMat dxm(grads.dx.data() + n * cin * positions, static_cast<Eigen::Index>(cin),
                 static_cast<Eigen::Index>(positions));
      dxm.noalias() = wm * cm;
    }
  }
  return grads;
}

PoolResult maxpool_forward(const Tensor& x, Triple window, Triple stride) {
  const Dims5 xd = dims5(x, "pool input");
  const Triple out = conv_out(xd.s, window, stride, {0, 0, 0});
  PoolResult r{Tensor(make_shape(x.rank(), xd.n, xd.c, out)), {}};
  r.argmax.resize(r.y.size());
  std::size_t q = 0;
  for (std::size_t plane = 0; plane < xd.n * xd.c; ++plane) {
    const std::size_t base = plane * xd.spatial();
    for (int od = 0; od < out[0]; ++od)
      for (int oh = 0; oh < out[1]; ++oh)
        for (int ow = 0; ow < out[2]; ++ow, ++q) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_index = 0;
          bool first = true;
          for (int kd = 0; kd < window[0]; ++kd)
            for (int kh = 0; kh < window[1]; ++kh)
              for (int kw = 0; kw < window[2]; ++kw) {
                const std::size_t idx =
                    base + (static_cast<std::size_t>(od * stride[0] + kd) * xd.s[1] + (oh * stride[1] + kh)) * xd.s[2] +
                    (ow * stride[2] + kw);
                if (first || x[idx] > best) {
                  best = x[idx];
                  best_index = idx;
                  first = false;
                }
              }
          r.y[q] = best;
          r.argmax[q] = best_index;
        }
  }
  return r;
}

Tensor maxpool_backward(const Tensor& dy, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& x_shape) {
  if (dy.size() != argmax.size()) fail(ErrorCode::ShapeMismatch, "pool gradient size");
  Tensor dx(x_shape);
  for (std::size_t q = 0; q < argmax.size(); ++q) dx[argmax[q]] += dy[q];
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.shape() != dy.shape()) fail(ErrorCode::ShapeMismatch, "relu gradient shape");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorCode::ShapeMismatch, "mse operand sizes");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

std::vector<double> mse_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorCode::ShapeMismatch, "mse operand sizes");
  std::vector<double> g(pred.size());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

Layer make_layer(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  Layer layer{spec, {}, {}, false};
  if (!spec.has_parameters()) return layer;
  const auto shape = spec.weight_shape();
  double fan_in = static_cast<double>(spec.in_channels) * static_cast<double>(volume(spec.kernel));
  if (spec.kind == LayerKind::ConvTranspose) fan_in /= static_cast<double>(volume(spec.stride));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  layer.weight = Tensor(shape);
  for (double& v : layer.weight.storage()) v = normal(rng);
  layer.bias = Tensor({static_cast<std::size_t>(spec.out_channels)});
  return layer;
}

Tensor Sequential::forward(const Tensor& x, ForwardTrace* trace, std::size_t first, std::size_t last) const {
  last = std::min(last, layers_.size());
  if (trace) {
    trace->inputs.clear();
    trace->argmax.clear();
  }
  Tensor cur = x;
  for (std::size_t l = first; l < last; ++l) {
    const Layer& layer = layers_[l];
    const LayerSpec& s = layer.spec;
    Tensor next;
    std::vector<std::size_t> argmax;
    switch (s.kind) {
      case LayerKind::Conv: next = conv_forward(cur, layer.weight, layer.bias, s.stride, s.padding); break;
      case LayerKind::ConvTranspose:
        next = conv_transpose_forward(cur, layer.weight, layer.bias, s.stride, s.padding);
        break;
      case LayerKind::MaxPool: {
        PoolResult p = maxpool_forward(cur, s.kernel, s.stride);
        next = std::move(p.y);
        argmax = std::move(p.argmax);
        break;
      }
      case LayerKind::ReLU: next = relu_forward(cur); break;
    }
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->argmax.push_back(std::move(argmax));
    }
    cur = std::move(next);
  }
  return cur;
}

void Sequential::backward(const ForwardTrace& trace, Tensor dy, std::vector<LayerGrads>& grads,
                          std::size_t first) const {
  const std::size_t count = trace.inputs.size();
  if (grads.size() != layers_.size()) fail(ErrorCode::ShapeMismatch, "gradient buffer count");
  // Input gradients are only needed down to the earliest trainable layer.
  std::size_t earliest = first + count;
  for (std::size_t l = first; l < first + count; ++l) {
    if (layers_[l].spec.has_parameters() && !layers_[l].frozen) {
      earliest = l;
      break;
    }
  }
  for (std::size_t i = count; i-- > 0;) {
    const std::size_t l = first + i;
    if (l < earliest) break;
    const Layer& layer = layers_[l];
    const LayerSpec& s = layer.spec;
    const Tensor& x = trace.inputs[i];
    const bool need_dx = l > earliest;
    switch (s.kind) {
      case LayerKind::Conv:
      case LayerKind::ConvTranspose: {
        ConvGrads g = s.kind == LayerKind::Conv
                          ? conv_backward(x, layer.weight, dy, s.stride, s.padding, need_dx)
                          : conv_transpose_backward(x, layer.weight, dy, s.stride, s.padding, need_dx);
        if (!layer.frozen) {
          auto& dw = grads[l].dw.storage();
          auto& db = grads[l].db.storage();
          for (std::size_t q = 0; q < dw.size(); ++q) dw[q] += g.dw[q];
          for (std::size_t q = 0; q < db.size(); ++q) db[q] += g.db[q];
        }
        dy = std::move(g.dx);
        break;
      }
      case LayerKind::MaxPool: dy = maxpool_backward(dy, trace.argmax[i], x.shape()); break;
      case LayerKind::ReLU: dy = relu_backward(x, dy); break;
    }
  }
}

std::vector<LayerGrads> Sequential::zero_grads() const {
  std::vector<LayerGrads> g(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].spec.has_parameters()) {
      g[l].dw = Tensor(layers_[l].weight.shape());
      g[l].db = Tensor(layers_[l].bias.shape());
    }
  }
  return g;
}

Triple Sequential::output_dims(Triple in) const {
  for (const Layer& l : layers_) in = l.spec.output_dims(in);
  return in;
}

int Sequential::output_channels() const {
  if (layers_.empty()) fail(ErrorCode::ShapeMismatch, "empty network");
  return layers_.back().spec.out_channels;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

}  // namespace topoforge::nn
