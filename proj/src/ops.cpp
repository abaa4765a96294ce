#include "gapccot/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {

using std::ptrdiff_t;
using std::size_t;

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

void require_rank(const Shape& s, size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + to_string(s));
  }
}

template <typename T>
void accumulate(TensorNode<T>& node, const std::vector<T>& delta) {
  if (!node.requires_grad) return;
  auto& g = grad_buffer(node);
  for (size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Valid output range [lo, hi) for one kernel tap along an axis.
struct TapRange {
  ptrdiff_t lo, hi;
};

TapRange tap_range(ptrdiff_t out_len, ptrdiff_t in_len, ptrdiff_t stride, ptrdiff_t pad,
                   ptrdiff_t tap) {
  // in = o*stride - pad + tap must lie in [0, in_len)
  ptrdiff_t lo = 0;
  ptrdiff_t first = tap - pad;
  if (first < 0) lo = (-first + stride - 1) / stride;
  ptrdiff_t hi = out_len;
  ptrdiff_t last_ok = in_len - 1 - first;  // o*stride <= last_ok
  if (last_ok < 0) return {0, 0};
  hi = std::min(hi, last_ok / stride + 1);
  return {lo, std::max(lo, hi)};
}

enum class Broadcast { None, BOverA, AOverB };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::None;
  auto channel_shape = [](const Shape& big, const Shape& small) {
    return big.size() == 4 && small.size() == 4 && big[0] == small[0] && big[1] == small[1] &&
           small[2] == 1 && small[3] == 1;
  };
  if (channel_shape(a, b)) return Broadcast::BOverA;
  if (channel_shape(b, a)) return Broadcast::AOverB;
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                       to_string(b));
}

enum class Arith { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Arith kind, const char* name) {
  Broadcast bc = broadcast_kind(a.shape(), b.shape(), name);
  const Shape out_shape = (bc == Broadcast::AOverB) ? b.shape() : a.shape();
  const size_t n = numel(out_shape);
  // Inner block size of the broadcast operand.
  const size_t plane = (bc == Broadcast::None) ? 1 : out_shape[2] * out_shape[3];
  auto ia = [=](size_t i) { return bc == Broadcast::AOverB ? i / plane : i; };
  auto ib = [=](size_t i) { return bc == Broadcast::BOverA ? i / plane : i; };

  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(n);
  for (size_t i = 0; i < n; ++i) {
    T x = da[ia(i)], y = db[ib(i)];
    out[i] = kind == Arith::Add ? x + y : kind == Arith::Sub ? x - y : x * y;
  }
  return Tensor<T>::from_op(out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                            [=](TensorNode<T>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              const auto& g = self.grad;
                              if (pa.requires_grad) {
                                auto& ga = grad_buffer(pa);
                                for (size_t i = 0; i < n; ++i) {
                                  T d = kind == Arith::Mul ? g[i] * pb.data[ib(i)] : g[i];
                                  ga[ia(i)] += d;
                                }
                              }
                              if (pb.requires_grad) {
                                auto& gb = grad_buffer(pb);
                                for (size_t i = 0; i < n; ++i) {
                                  T d = kind == Arith::Add   ? g[i]
                                        : kind == Arith::Sub ? -g[i]
                                                             : g[i] * pa.data[ia(i)];
                                  gb[ib(i)] += d;
                                }
                              }
                            });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  const size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const size_t O = weight.dim(0), Cg = weight.dim(1), KH = weight.dim(2), KW = weight.dim(3);
  const size_t G = opt.groups;
  if (opt.stride == 0) throw UsageError("conv2d: stride must be >= 1");
  if (G == 0 || C % G != 0) {
    throw DimensionError("conv2d: input channels (axis 1) = " + std::to_string(C) +
                         " not divisible by groups = " + std::to_string(G));
  }
  if (O % G != 0) {
    throw DimensionError("conv2d: output channels (weight axis 0) = " + std::to_string(O) +
                         " not divisible by groups = " + std::to_string(G));
  }
  if (Cg != C / G) {
    throw DimensionError("conv2d: weight axis 1 = " + std::to_string(Cg) + ", expected " +
                         std::to_string(C / G));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(O) + "], got " +
                         to_string(bias.shape()));
  }
  if (H + 2 * opt.padding < KH) throw DimensionError("conv2d: kernel taller than padded input (axis 2)");
  if (W + 2 * opt.padding < KW) throw DimensionError("conv2d: kernel wider than padded input (axis 3)");

  const size_t OH = (H + 2 * opt.padding - KH) / opt.stride + 1;
  const size_t OW = (W + 2 * opt.padding - KW) / opt.stride + 1;
  const ptrdiff_t S = static_cast<ptrdiff_t>(opt.stride);
  const ptrdiff_t P = static_cast<ptrdiff_t>(opt.padding);
  const size_t Og = O / G;

  std::vector<TapRange> rows(KH), cols(KW);
  for (size_t t = 0; t < KH; ++t) rows[t] = tap_range(OH, H, S, P, static_cast<ptrdiff_t>(t));
  for (size_t t = 0; t < KW; ++t) cols[t] = tap_range(OW, W, S, P, static_cast<ptrdiff_t>(t));

  // Visits every (output pixel, input pixel, weight) triple once.
  auto for_each_tap = [=](auto&& fn) {
    for (size_t n = 0; n < N; ++n)
      for (size_t o = 0; o < O; ++o) {
        const size_t g = o / Og;
        for (size_t ci = 0; ci < Cg; ++ci) {
          const size_t c = g * Cg + ci;
          const size_t in_plane = (n * C + c) * H * W;
          const size_t out_plane = (n * O + o) * OH * OW;
          for (size_t kh = 0; kh < KH; ++kh)
            for (size_t kw = 0; kw < KW; ++kw) {
              const size_t widx = ((o * Cg + ci) * KH + kh) * KW + kw;
              fn(in_plane, out_plane, widx, rows[kh], cols[kw], static_cast<ptrdiff_t>(kh) - P,
                 static_cast<ptrdiff_t>(kw) - P);
            }
        }
      }
  };

  std::vector<T> out(N * O * OH * OW, T(0));
  {
    auto x = input.data();
    auto w = weight.data();
    for_each_tap([&](size_t ip, size_t op, size_t widx, TapRange rr, TapRange cr, ptrdiff_t dy,
                     ptrdiff_t dx) {
      const T wv = w[widx];
      for (ptrdiff_t oy = rr.lo; oy < rr.hi; ++oy) {
        const T* src = x.data() + ip + (oy * S + dy) * static_cast<ptrdiff_t>(W) + dx;
        T* dst = out.data() + op + oy * static_cast<ptrdiff_t>(OW);
        for (ptrdiff_t ox = cr.lo; ox < cr.hi; ++ox) dst[ox] += wv * src[ox * S];
      }
    });
    if (bias.defined()) {
      auto b = bias.data();
      for (size_t n = 0; n < N; ++n)
        for (size_t o = 0; o < O; ++o) {
          T* dst = out.data() + (n * O + o) * OH * OW;
          for (size_t i = 0; i < OH * OW; ++i) dst[i] += b[o];
        }
    }
  }

  std::vector<NodePtr<T>> parents{input.node_ptr(), weight.node_ptr()};
  if (bias.defined()) parents.push_back(bias.node_ptr());
  return Tensor<T>::from_op(
      {N, O, OH, OW}, std::move(out), std::move(parents), [=](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const T* g = self.grad.data();
        T* gx = px.requires_grad ? grad_buffer(px).data() : nullptr;
        T* gw = pw.requires_grad ? grad_buffer(pw).data() : nullptr;
        const T* x = px.data.data();
        const T* w = pw.data.data();
        for_each_tap([&](size_t ip, size_t op, size_t widx, TapRange rr, TapRange cr,
                         ptrdiff_t dy, ptrdiff_t dx) {
          const T wv = w[widx];
          T acc = T(0);
          for (ptrdiff_t oy = rr.lo; oy < rr.hi; ++oy) {
            const ptrdiff_t in_off = ip + (oy * S + dy) * static_cast<ptrdiff_t>(W) + dx;
            const T* grow = g + op + oy * static_cast<ptrdiff_t>(OW);
            if (gx) {
              T* dst = gx + in_off;
              for (ptrdiff_t ox = cr.lo; ox < cr.hi; ++ox) dst[ox * S] += wv * grow[ox];
            }
            if (gw) {
              const T* src = x + in_off;
              for (ptrdiff_t ox = cr.lo; ox < cr.hi; ++ox) acc += grow[ox] * src[ox * S];
            }
          }
          if (gw) gw[widx] += acc;
        });
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = grad_buffer(*self.parents[2]);
          for (size_t n = 0; n < N; ++n)
            for (size_t o = 0; o < O; ++o) {
              const T* src = g + (n * O + o) * OH * OW;
              T acc = T(0);
              for (size_t i = 0; i < OH * OW; ++i) acc += src[i];
              gb[o] += acc;
            }
        }
      });
}

template <typename T>
Tensor<T> matmul_1x1(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() == 2) {
    return conv2d(input, reshape(weight, {weight.dim(0), weight.dim(1), 1, 1}), bias);
  }
  if (weight.rank() != 4 || weight.dim(2) != 1 || weight.dim(3) != 1) {
    throw DimensionError("matmul_1x1: weight must be [O,C] or [O,C,1,1], got " +
                         to_string(weight.shape()));
  }
  return conv2d(input, weight, bias);
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  auto d = x.data();
  std::vector<T> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = d[i] > T(0) ? d[i] : slope * d[i];
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node_ptr()},
                            [slope](TensorNode<T>& self) {
                              auto& p = *self.parents[0];
                              auto& g = grad_buffer(p);
                              for (size_t i = 0; i < g.size(); ++i)
                                g[i] += self.grad[i] * (p.data[i] > T(0) ? T(1) : slope);
                            });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto d = x.data();
  std::vector<T> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-d[i]));
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node_ptr()}, [](TensorNode<T>& self) {
    auto& g = grad_buffer(*self.parents[0]);
    for (size_t i = 0; i < g.size(); ++i) {
      const T s = self.data[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(x.shape()));
  }
  const Shape& s = x.shape();
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const size_t len = s[axis];

  auto d = x.data();
  std::vector<T> out(d.size());
  for (size_t o = 0; o < outer; ++o)
    for (size_t i = 0; i < inner; ++i) {
      const size_t base = o * len * inner + i;
      T mx = d[base];
      for (size_t j = 1; j < len; ++j) mx = std::max(mx, d[base + j * inner]);
      T total = T(0);
      for (size_t j = 0; j < len; ++j) {
        T e = std::exp(d[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  return Tensor<T>::from_op(s, std::move(out), {x.node_ptr()}, [=](TensorNode<T>& self) {
    auto& g = grad_buffer(*self.parents[0]);
    for (size_t o = 0; o < outer; ++o)
      for (size_t i = 0; i < inner; ++i) {
        const size_t base = o * len * inner + i;
        T dot = T(0);
        for (size_t j = 0; j < len; ++j)
          dot += self.grad[base + j * inner] * self.data[base + j * inner];
        for (size_t j = 0; j < len; ++j) {
          const size_t k = base + j * inner;
          g[k] += self.data[k] * (self.grad[k] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  auto d = x.data();
  std::vector<T> out(N * C);
  for (size_t i = 0; i < N * C; ++i) {
    T acc = T(0);
    for (size_t p = 0; p < HW; ++p) acc += d[i * HW + p];
    out[i] = acc / static_cast<T>(HW);
  }
  return Tensor<T>::from_op({N, C, 1, 1}, std::move(out), {x.node_ptr()},
                            [=](TensorNode<T>& self) {
                              auto& g = grad_buffer(*self.parents[0]);
                              for (size_t i = 0; i < N * C; ++i) {
                                const T v = self.grad[i] / static_cast<T>(HW);
                                for (size_t p = 0; p < HW; ++p) g[i * HW + p] += v;
                              }
                            });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> xs, size_t axis) {
  if (xs.empty()) throw UsageError("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= first[i];
  for (size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<size_t> widths;
  std::vector<NodePtr<T>> parents;
  for (const auto& t : xs) {
    widths.push_back(t.shape()[axis] * inner);
    parents.push_back(t.node_ptr());
  }
  const size_t row = out_shape[axis] * inner;
  std::vector<T> out(numel(out_shape));
  size_t offset = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    auto d = xs[k].data();
    for (size_t o = 0; o < outer; ++o)
      std::copy_n(d.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    offset += widths[k];
  }
  return Tensor<T>::from_op(out_shape, std::move(out), std::move(parents),
                            [=](TensorNode<T>& self) {
                              size_t off = 0;
                              for (size_t k = 0; k < self.parents.size(); ++k) {
                                auto& p = *self.parents[k];
                                if (p.requires_grad) {
                                  auto& g = grad_buffer(p);
                                  for (size_t o = 0; o < outer; ++o)
                                    for (size_t i = 0; i < widths[k]; ++i)
                                      g[o * widths[k] + i] += self.grad[o * row + off + i];
                                }
                                off += widths[k];
                              }
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Arith::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Arith::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Arith::Mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto d = x.data();
  std::vector<T> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = d[i] * factor;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node_ptr()},
                            [factor](TensorNode<T>& self) {
                              auto& g = grad_buffer(*self.parents[0]);
                              for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return Tensor<T>::from_op({}, {acc}, {x.node_ptr()}, [](TensorNode<T>& self) {
    auto& g = grad_buffer(*self.parents[0]);
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {x.node_ptr()},
                            [](TensorNode<T>& self) {
                              auto& g = grad_buffer(*self.parents[0]);
                              for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                            });
}

namespace {

// Index of the shuffled element for input flat index, for [N, C*r*r, H, W].
struct ShuffleMap {
  size_t N, C, H, W, r;
  size_t out_index(size_t n, size_t cin, size_t y, size_t x) const {
    const size_t c = cin / (r * r);
    const size_t i = (cin % (r * r)) / r;
    const size_t j = cin % r;
    return ((n * C + c) * H * r + (y * r + i)) * W * r + (x * r + j);
  }
};

template <typename T>
Tensor<T> shuffle_impl(const Tensor<T>& x, const ShuffleMap& m, Shape out_shape, bool forward) {
  std::vector<size_t> map(x.numel());
  size_t k = 0;
  for (size_t n = 0; n < m.N; ++n)
    for (size_t cin = 0; cin < m.C * m.r * m.r; ++cin)
      for (size_t y = 0; y < m.H; ++y)
        for (size_t xx = 0; xx < m.W; ++xx) map[k++] = m.out_index(n, cin, y, xx);
  // map: packed index -> unpacked index. forward reads packed input.
  auto d = x.data();
  std::vector<T> out(d.size());
  for (size_t i = 0; i < map.size(); ++i) {
    if (forward) out[map[i]] = d[i];
    else out[i] = d[map[i]];
  }
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), {x.node_ptr()},
                            [map = std::move(map), forward](TensorNode<T>& self) {
                              auto& g = grad_buffer(*self.parents[0]);
                              for (size_t i = 0; i < map.size(); ++i) {
                                if (forward) g[i] += self.grad[map[i]];
                                else g[map[i]] += self.grad[i];
                              }
                            });
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, size_t r) {
  require_rank(x.shape(), 4, "pixel_shuffle", "input");
  if (r == 0 || x.dim(1) % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: channels (axis 1) = " + std::to_string(x.dim(1)) +
                         " not divisible by r^2 = " + std::to_string(r * r));
  }
  ShuffleMap m{x.dim(0), x.dim(1) / (r * r), x.dim(2), x.dim(3), r};
  return shuffle_impl(x, m, {m.N, m.C, m.H * r, m.W * r}, true);
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, size_t r) {
  require_rank(x.shape(), 4, "pixel_unshuffle", "input");
  if (r == 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw DimensionError("pixel_unshuffle: spatial dims " + to_string(x.shape()) +
                         " not divisible by r = " + std::to_string(r));
  }
  ShuffleMap m{x.dim(0), x.dim(1), x.dim(2) / r, x.dim(3) / r, r};
  return shuffle_impl(x, m, {m.N, m.C * r * r, m.H, m.W}, false);
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: pred " + to_string(pred.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  auto p = pred.data();
  auto t = target.data();
  const size_t n = p.size();
  // Accumulate in double so 32-bit training losses are stable.
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += r * r;
  }
  const T value = static_cast<T>(acc / static_cast<double>(n));
  return Tensor<T>::from_op({}, {value}, {pred.node_ptr(), target.node_ptr()},
                            [n](TensorNode<T>& self) {
                              auto& pp = *self.parents[0];
                              auto& pt = *self.parents[1];
                              const T c = T(2) * self.grad[0] / static_cast<T>(n);
                              if (pp.requires_grad) {
                                auto& g = grad_buffer(pp);
                                for (size_t i = 0; i < n; ++i) g[i] += c * (pp.data[i] - pt.data[i]);
                              }
                              if (pt.requires_grad) {
                                auto& g = grad_buffer(pt);
                                for (size_t i = 0; i < n; ++i) g[i] -= c * (pp.data[i] - pt.data[i]);
                              }
                            });
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& attention, const Tensor<T>& value, size_t k) {
  require_rank(attention.shape(), 5, "window_attention", "attention");
  require_rank(value.shape(), 4, "window_attention", "value");
  if (k % 2 == 0) throw ConfigError("window_attention: window size must be odd");
  const size_t N = value.dim(0), C = value.dim(1), H = value.dim(2), W = value.dim(3);
  const size_t heads = attention.dim(1);
  if (attention.dim(0) != N || attention.dim(2) != k * k || attention.dim(3) != H ||
      attention.dim(4) != W) {
    throw DimensionError("window_attention: attention " + to_string(attention.shape()) +
                         " does not match value " + to_string(value.shape()) + " with k=" +
                         std::to_string(k));
  }
  if (heads == 0 || C % heads != 0) {
    throw DimensionError("window_attention: value channels (axis 1) = " + std::to_string(C) +
                         " not divisible by heads = " + std::to_string(heads));
  }
  const size_t per_head = C / heads;
  const ptrdiff_t R = static_cast<ptrdiff_t>(k / 2);
  const ptrdiff_t Hs = static_cast<ptrdiff_t>(H), Ws = static_cast<ptrdiff_t>(W);

  auto for_each = [=](auto&& fn) {
    for (size_t n = 0; n < N; ++n)
      for (size_t c = 0; c < C; ++c) {
        const size_t h = c / per_head;
        const size_t vplane = (n * C + c) * H * W;
        for (size_t j = 0; j < k * k; ++j) {
          const ptrdiff_t dy = static_cast<ptrdiff_t>(j / k) - R;
          const ptrdiff_t dx = static_cast<ptrdiff_t>(j % k) - R;
          const size_t aplane = ((n * heads + h) * k * k + j) * H * W;
          const ptrdiff_t y0 = std::max<ptrdiff_t>(0, -dy), y1 = std::min(Hs, Hs - dy);
          const ptrdiff_t x0 = std::max<ptrdiff_t>(0, -dx), x1 = std::min(Ws, Ws - dx);
          for (ptrdiff_t y = y0; y < y1; ++y)
            for (ptrdiff_t x = x0; x < x1; ++x) {
              const size_t p = static_cast<size_t>(y * Ws + x);
              const size_t q = static_cast<size_t>((y + dy) * Ws + (x + dx));
              fn(vplane + p, aplane + p, vplane + q);
            }
        }
      }
  };

  std::vector<T> out(value.numel(), T(0));
  {
    auto a = attention.data();
    auto v = value.data();
    for_each([&](size_t o, size_t ai, size_t vi) { out[o] += a[ai] * v[vi]; });
  }
  return Tensor<T>::from_op(
      value.shape(), std::move(out), {attention.node_ptr(), value.node_ptr()},
      [=](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pv = *self.parents[1];
        T* ga = pa.requires_grad ? grad_buffer(pa).data() : nullptr;
        T* gv = pv.requires_grad ? grad_buffer(pv).data() : nullptr;
        const T* g = self.grad.data();
        for_each([&](size_t o, size_t ai, size_t vi) {
          if (ga) ga[ai] += g[o] * pv.data[vi];
          if (gv) gv[vi] += g[o] * pa.data[ai];
        });
      });
}

#define GAPCCOT_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                            Conv2dOptions);                                                  \
  template Tensor<T> matmul_1x1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> softmax(const Tensor<T>&, size_t);                                      \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                      \
  template Tensor<T> concat(std::span<const Tensor<T>>, size_t);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, size_t);                                \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, size_t);                              \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> window_attention(const Tensor<T>&, const Tensor<T>&, size_t);

GAPCCOT_INSTANTIATE_OPS(float)
GAPCCOT_INSTANTIATE_OPS(double)

}  // namespace gapccot
