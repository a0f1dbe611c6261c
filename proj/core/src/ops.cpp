#include "effloc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "effloc/errors.hpp"

namespace effloc {

namespace {

using detail::Node;

Tensor make_op(Shape shape, std::vector<double> value,
               const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) rg = rg || t.requires_grad();
  }
  if (rg) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// Broadcasting

struct BcastPlan {
  Shape out;
  std::vector<std::size_t> sa, sb;  // element strides per out dim, 0 = repeat
};

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

BcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  BcastPlan p;
  p.out.resize(nd);
  p.sa.assign(nd, 0);
  p.sb.assign(nd, 0);
  const auto stA = row_major_strides(a);
  const auto stB = row_major_strides(b);
  for (std::size_t d = 0; d < nd; ++d) {
    const bool hasA = d >= nd - a.size();
    const bool hasB = d >= nd - b.size();
    const std::size_t da = hasA ? a[d - (nd - a.size())] : 1;
    const std::size_t db = hasB ? b[d - (nd - b.size())] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("broadcast: incompatible shapes " + shape_str(a) +
                           " and " + shape_str(b));
    }
    p.out[d] = std::max(da, db);
    if (hasA && da != 1) p.sa[d] = stA[d - (nd - a.size())];
    if (hasB && db != 1) p.sb[d] = stB[d - (nd - b.size())];
  }
  return p;
}

template <class F>
void bcast_for_each(const BcastPlan& p, F&& f) {
  const std::size_t n = shape_numel(p.out);
  const std::size_t nd = p.out.size();
  std::vector<std::size_t> idx(nd, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.sa[d] * p.out[d];
      ob -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// ---------------------------------------------------------------------------
// Axis bookkeeping for reductions / softmax

struct AxisSplit {
  std::size_t outer, axis, inner;
};

AxisSplit axis_split(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  }
  AxisSplit a{1, s[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) a.outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) a.inner *= s[d];
  return a;
}

Shape drop_axis(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d == axis) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(s[d]);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  if (same_shape(a.shape(), b.shape())) {
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] += self.grad[i];
      }
    });
  }
  BcastPlan p = broadcast_plan(a.shape(), b.shape());
  std::vector<double> out(shape_numel(p.out));
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    bcast_for_each(p, [&](std::size_t i, std::size_t oa, std::size_t ob) {
      out[i] = av[oa] + bv[ob];
    });
  }
  return make_op(p.out, std::move(out), {a, b}, [p](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      bcast_for_each(p, [&](std::size_t i, std::size_t oa, std::size_t) {
        pa.grad[oa] += self.grad[i];
      });
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      bcast_for_each(p, [&](std::size_t i, std::size_t, std::size_t ob) {
        pb.grad[ob] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (same_shape(a.shape(), b.shape())) {
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] += self.grad[i] * pa.value[i];
      }
    });
  }
  BcastPlan p = broadcast_plan(a.shape(), b.shape());
  std::vector<double> out(shape_numel(p.out));
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    bcast_for_each(p, [&](std::size_t i, std::size_t oa, std::size_t ob) {
      out[i] = av[oa] * bv[ob];
    });
  }
  return make_op(p.out, std::move(out), {a, b}, [p](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      bcast_for_each(p, [&](std::size_t i, std::size_t oa, std::size_t ob) {
        pa.grad[oa] += self.grad[i] * pb.value[ob];
      });
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      bcast_for_each(p, [&](std::size_t i, std::size_t oa, std::size_t ob) {
        pb.grad[ob] += self.grad[i] * pa.value[oa];
      });
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op(a.shape(), std::move(out), {a}, [s](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i] * s;
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

Tensor relu(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0 ? av[i] : 0.0;
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (pa.value[i] > 0) pa.grad[i] += self.grad[i];
  });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * kInvSqrt2));
  }
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = pa.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      pa.grad[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor exp(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i] * self.value[i];
  });
}

Tensor abs(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::fabs(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = pa.value[i];
      const double sgn = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
      pa.grad[i] += self.grad[i] * sgn;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  const auto& av = a.values();
  double acc = 0.0;
  for (double v : av) acc += v;
  return make_op(Shape{}, {acc}, {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
  });
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  const AxisSplit sp = axis_split(a.shape(), axis);
  Shape out_shape = drop_axis(a.shape(), axis, keepdim);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.axis; ++k) {
      const std::size_t src = (o * sp.axis + k) * sp.inner;
      const std::size_t dst = o * sp.inner;
      for (std::size_t j = 0; j < sp.inner; ++j) out[dst + j] += av[src + j];
    }
  return make_op(std::move(out_shape), std::move(out), {a}, [sp](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.axis; ++k) {
        const std::size_t dst = (o * sp.axis + k) * sp.inner;
        const std::size_t src = o * sp.inner;
        for (std::size_t j = 0; j < sp.inner; ++j)
          pa.grad[dst + j] += self.grad[src + j];
      }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / double(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const double n = double(a.shape()[axis]);
  return scale(sum(a, axis, keepdim), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(new_shape));
  }
  return make_op(std::move(new_shape), a.values(), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  if (perm.size() != s.size()) throw DimensionError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t d : perm) {
    if (d >= perm.size() || seen[d]) throw DimensionError("permute: bad axes");
    seen[d] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) out_shape[d] = s[perm[d]];
  const auto src_strides = row_major_strides(s);
  // stride through the source while walking the output row-major
  std::vector<std::size_t> walk(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) walk[d] = src_strides[perm[d]];

  const std::size_t n = a.numel();
  const std::size_t nd = s.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  {
    std::vector<std::size_t> idx(nd, 0);
    std::size_t so = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = av[so];
      for (std::size_t d = nd; d-- > 0;) {
        ++idx[d];
        so += walk[d];
        if (idx[d] < out_shape[d]) break;
        so -= walk[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  return make_op(std::move(out_shape), std::move(out), {a},
                 [walk](Node& self) {
                   Node& pa = *self.parents[0];
                   if (!pa.requires_grad) return;
                   pa.ensure_grad();
                   const std::size_t nd = self.shape.size();
                   std::vector<std::size_t> idx(nd, 0);
                   std::size_t so = 0;
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     pa.grad[so] += self.grad[i];
                     for (std::size_t d = nd; d-- > 0;) {
                       ++idx[d];
                       so += walk[d];
                       if (idx[d] < self.shape[d]) break;
                       so -= walk[d] * self.shape[d];
                       idx[d] = 0;
                     }
                   }
                 });
}

Tensor transpose(const Tensor& a, std::size_t d0, std::size_t d1) {
  std::vector<std::size_t> perm(a.ndim());
  for (std::size_t d = 0; d < perm.size(); ++d) perm[d] = d;
  if (d0 >= perm.size() || d1 >= perm.size()) {
    throw DimensionError("transpose: axis out of range for shape " +
                         shape_str(a.shape()));
  }
  std::swap(perm[d0], perm[d1]);
  return permute(a, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) {
      throw DimensionError("concat: rank mismatch between " + shape_str(s0) +
                           " and " + shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) {
        throw DimensionError("concat: shape mismatch between " +
                             shape_str(s0) + " and " + shape_str(s));
      }
    }
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  const AxisSplit sp = axis_split(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> part_axis(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p)
    part_axis[p] = parts[p].shape()[axis];

  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::size_t k0 = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto& pv = parts[p].values();
      const std::size_t block = part_axis[p] * sp.inner;
      const std::size_t src = o * block;
      const std::size_t dst = (o * sp.axis + k0) * sp.inner;
      std::copy(pv.begin() + src, pv.begin() + src + block, out.begin() + dst);
      k0 += part_axis[p];
    }
  }
  std::vector<Tensor> inputs = parts;
  return make_op(std::move(out_shape), std::move(out), inputs,
                 [sp, part_axis](Node& self) {
                   for (std::size_t o = 0; o < sp.outer; ++o) {
                     std::size_t k0 = 0;
                     for (std::size_t p = 0; p < self.parents.size(); ++p) {
                       Node& pa = *self.parents[p];
                       const std::size_t block = part_axis[p] * sp.inner;
                       if (pa.requires_grad) {
                         pa.ensure_grad();
                         const std::size_t dst = o * block;
                         const std::size_t src = (o * sp.axis + k0) * sp.inner;
                         for (std::size_t i = 0; i < block; ++i)
                           pa.grad[dst + i] += self.grad[src + i];
                       }
                       k0 += part_axis[p];
                     }
                   }
                 });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start,
              std::size_t len) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + len > s[axis] || len == 0) {
    throw DimensionError("narrow: slice [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") invalid for shape " +
                         shape_str(s));
  }
  const AxisSplit sp = axis_split(s, axis);
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(sp.outer * len * sp.inner);
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const std::size_t src = (o * sp.axis + start) * sp.inner;
    const std::size_t dst = o * len * sp.inner;
    std::copy(av.begin() + src, av.begin() + src + len * sp.inner,
              out.begin() + dst);
  }
  return make_op(std::move(out_shape), std::move(out), {a},
                 [sp, start, len](Node& self) {
                   Node& pa = *self.parents[0];
                   if (!pa.requires_grad) return;
                   pa.ensure_grad();
                   for (std::size_t o = 0; o < sp.outer; ++o) {
                     const std::size_t dst = (o * sp.axis + start) * sp.inner;
                     const std::size_t src = o * len * sp.inner;
                     for (std::size_t i = 0; i < len * sp.inner; ++i)
                       pa.grad[dst + i] += self.grad[src + i];
                   }
                 });
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis,
                          const std::vector<std::size_t>& sizes) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("split: axis out of range");
  std::size_t total = 0;
  for (std::size_t z : sizes) total += z;
  if (total != s[axis]) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) +
                         " but axis has " + std::to_string(s[axis]) +
                         " in shape " + shape_str(s));
  }
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  std::size_t start = 0;
  for (std::size_t z : sizes) {
    parts.push_back(narrow(a, axis, start, z));
    start += z;
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Matrix product

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul: inputs must have rank >= 2, got " +
                         shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t k2 = sb[sb.size() - 2];
  const std::size_t n = sb[sb.size() - 1];
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(sa) + " x " + shape_str(sb));
  }
  Shape lead_a(sa.begin(), sa.end() - 2);
  Shape lead_b(sb.begin(), sb.end() - 2);
  BcastPlan p = broadcast_plan(lead_a, lead_b);

  // Per-batch base offsets, in matrix units.
  std::vector<std::pair<std::size_t, std::size_t>> bases;
  bases.reserve(shape_numel(p.out));
  bcast_for_each(p, [&](std::size_t, std::size_t oa, std::size_t ob) {
    bases.emplace_back(oa, ob);
  });

  Shape out_shape = p.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::int64_t nb = static_cast<std::int64_t>(bases.size());
  std::vector<double> out(std::size_t(nb) * m * n, 0.0);
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t bi = 0; bi < nb; ++bi) {
      const double* A = av + bases[bi].first * (m * k);
      const double* B = bv + bases[bi].second * (k * n);
      double* C = ov + std::size_t(bi) * (m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = A[i * k + kk];
          const double* Brow = B + kk * n;
          double* Crow = C + i * n;
          for (std::size_t j = 0; j < n; ++j) Crow[j] += aik * Brow[j];
        }
      }
    }
  }
  return make_op(
      std::move(out_shape), std::move(out), {a, b},
      [bases, m, n, k](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* av = pa.value.data();
        const double* bv = pb.value.data();
        const double* gv = self.grad.data();
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA = dC . B^T, summed over broadcast batches in recorded order.
          for (std::size_t bi = 0; bi < bases.size(); ++bi) {
            double* dA = pa.grad.data() + bases[bi].first * (m * k);
            const double* B = bv + bases[bi].second * (k * n);
            const double* G = gv + bi * (m * n);
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double* Grow = G + i * n;
                const double* Brow = B + kk * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
                dA[i * k + kk] += acc;
              }
            }
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB = A^T . dC
          for (std::size_t bi = 0; bi < bases.size(); ++bi) {
            const double* A = av + bases[bi].first * (m * k);
            double* dB = pb.grad.data() + bases[bi].second * (k * n);
            const double* G = gv + bi * (m * n);
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = A[i * k + kk];
                const double* Grow = G + i * n;
                double* dBrow = dB + kk * n;
                for (std::size_t j = 0; j < n; ++j)
                  dBrow[j] += aik * Grow[j];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvDims {
  std::size_t B, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride,
                   std::size_t padding, bool depthwise) {
  if (x.ndim() != 4 || w.ndim() != 4) {
    throw DimensionError("conv2d: expected 4-d input and kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvDims d;
  d.B = x.dim(0);
  d.Cin = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (depthwise) {
    if (w.dim(1) != 1 || d.Cout != d.Cin) {
      throw DimensionError("depthwise_conv2d: kernel " + shape_str(w.shape()) +
                           " does not match input channels of " +
                           shape_str(x.shape()));
    }
  } else if (w.dim(1) != d.Cin) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  if (d.kh > d.H + 2 * d.pad || d.kw > d.W + 2 * d.pad) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
  }
  d.Ho = (d.H + 2 * d.pad - d.kh) / d.stride + 1;
  d.Wo = (d.W + 2 * d.pad - d.kw) / d.stride + 1;
  return d;
}

// Output range [lo, hi) for which o*stride + kpos - pad lands inside [0, in).
void out_bounds(std::size_t kpos, std::size_t pad, std::size_t stride,
                std::size_t in, std::size_t out, std::size_t& lo,
                std::size_t& hi) {
  const std::int64_t off = std::int64_t(kpos) - std::int64_t(pad);
  std::int64_t l = 0;
  if (off < 0) l = (-off + std::int64_t(stride) - 1) / std::int64_t(stride);
  std::int64_t h = (std::int64_t(in) - 1 - off) / std::int64_t(stride) + 1;
  if (h > std::int64_t(out)) h = std::int64_t(out);
  if (h < l) h = l;
  lo = std::size_t(l);
  hi = std::size_t(h);
}

// Shared conv kernel; `depthwise` selects the single-filter-per-channel form.
Tensor conv_impl(const Tensor& x, const Tensor& w, std::size_t stride,
                 std::size_t padding, bool depthwise) {
  const ConvDims d = conv_dims(x, w, stride, padding, depthwise);
  std::vector<double> out(d.B * d.Cout * d.Ho * d.Wo, 0.0);
  const std::size_t cin_per_filter = depthwise ? 1 : d.Cin;

  {
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    double* ov = out.data();
    const std::int64_t planes = std::int64_t(d.B) * d.Cout;
#pragma omp parallel for schedule(static)
    for (std::int64_t bc = 0; bc < planes; ++bc) {
      const std::size_t b = std::size_t(bc) / d.Cout;
      const std::size_t co = std::size_t(bc) % d.Cout;
      double* oplane = ov + (b * d.Cout + co) * (d.Ho * d.Wo);
      for (std::size_t cf = 0; cf < cin_per_filter; ++cf) {
        const std::size_t ci = depthwise ? co : cf;
        const double* xplane = xv + (b * d.Cin + ci) * (d.H * d.W);
        const double* wbase = wv + (co * cin_per_filter + cf) * (d.kh * d.kw);
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          std::size_t oy_lo, oy_hi;
          out_bounds(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double wk = wbase[ky * d.kw + kx];
            if (wk == 0.0) continue;
            std::size_t ox_lo, ox_hi;
            out_bounds(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
            for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
              const std::size_t iy = oy * d.stride + ky - d.pad;
              const double* xrow = xplane + iy * d.W;
              double* orow = oplane + oy * d.Wo;
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                const std::size_t ix = ox * d.stride + kx - d.pad;
                orow[ox] += wk * xrow[ix];
              }
            }
          }
        }
      }
    }
  }

  Shape out_shape{d.B, d.Cout, d.Ho, d.Wo};
  return make_op(
      std::move(out_shape), std::move(out), {x, w},
      [d, depthwise, cin_per_filter](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        const double* xv = px.value.data();
        const double* wv = pw.value.data();
        const double* gv = self.grad.data();
        if (px.requires_grad) {
          px.ensure_grad();
          double* dx = px.grad.data();
          const std::int64_t planes = std::int64_t(d.B) * d.Cin;
#pragma omp parallel for schedule(static)
          for (std::int64_t bc = 0; bc < planes; ++bc) {
            const std::size_t b = std::size_t(bc) / d.Cin;
            const std::size_t ci = std::size_t(bc) % d.Cin;
            double* dxplane = dx + (b * d.Cin + ci) * (d.H * d.W);
            const std::size_t co_lo = depthwise ? ci : 0;
            const std::size_t co_hi = depthwise ? ci + 1 : d.Cout;
            for (std::size_t co = co_lo; co < co_hi; ++co) {
              const std::size_t cf = depthwise ? 0 : ci;
              const double* gplane = gv + (b * d.Cout + co) * (d.Ho * d.Wo);
              const double* wbase =
                  wv + (co * cin_per_filter + cf) * (d.kh * d.kw);
              for (std::size_t ky = 0; ky < d.kh; ++ky) {
                std::size_t oy_lo, oy_hi;
                out_bounds(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
                for (std::size_t kx = 0; kx < d.kw; ++kx) {
                  const double wk = wbase[ky * d.kw + kx];
                  if (wk == 0.0) continue;
                  std::size_t ox_lo, ox_hi;
                  out_bounds(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
                  for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
                    const std::size_t iy = oy * d.stride + ky - d.pad;
                    double* dxrow = dxplane + iy * d.W;
                    const double* grow = gplane + oy * d.Wo;
                    for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                      const std::size_t ix = ox * d.stride + kx - d.pad;
                      dxrow[ix] += wk * grow[ox];
                    }
                  }
                }
              }
            }
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          double* dw = pw.grad.data();
#pragma omp parallel for schedule(static)
          for (std::int64_t co = 0; co < std::int64_t(d.Cout); ++co) {
            for (std::size_t cf = 0; cf < cin_per_filter; ++cf) {
              const std::size_t ci = depthwise ? std::size_t(co) : cf;
              double* dwbase =
                  dw + (std::size_t(co) * cin_per_filter + cf) * (d.kh * d.kw);
              for (std::size_t ky = 0; ky < d.kh; ++ky) {
                std::size_t oy_lo, oy_hi;
                out_bounds(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
                for (std::size_t kx = 0; kx < d.kw; ++kx) {
                  std::size_t ox_lo, ox_hi;
                  out_bounds(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
                  double acc = 0.0;
                  for (std::size_t b = 0; b < d.B; ++b) {
                    const double* xplane =
                        xv + (b * d.Cin + ci) * (d.H * d.W);
                    const double* gplane =
                        gv + (b * d.Cout + std::size_t(co)) * (d.Ho * d.Wo);
                    for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
                      const std::size_t iy = oy * d.stride + ky - d.pad;
                      const double* xrow = xplane + iy * d.W;
                      const double* grow = gplane + oy * d.Wo;
                      for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                        const std::size_t ix = ox * d.stride + kx - d.pad;
                        acc += xrow[ix] * grow[ox];
                      }
                    }
                  }
                  dwbase[ky * d.kw + kx] += acc;
                }
              }
            }
          }
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t padding) {
  return conv_impl(x, w, stride, padding, false);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
                        std::size_t padding) {
  return conv_impl(x, w, stride, padding, true);
}

// ---------------------------------------------------------------------------
// Softmax

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit sp = axis_split(a.shape(), axis);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.inner; ++j) {
      const std::size_t base = o * sp.axis * sp.inner + j;
      double mx = av[base];
      for (std::size_t k = 1; k < sp.axis; ++k)
        mx = std::max(mx, av[base + k * sp.inner]);
      double denom = 0.0;
      for (std::size_t k = 0; k < sp.axis; ++k) {
        const double e = std::exp(av[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::size_t k = 0; k < sp.axis; ++k) out[base + k * sp.inner] *= inv;
    }
  }
  return make_op(a.shape(), std::move(out), {a}, [sp](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t j = 0; j < sp.inner; ++j) {
        const std::size_t base = o * sp.axis * sp.inner + j;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.axis; ++k) {
          const std::size_t ix = base + k * sp.inner;
          dot += self.grad[ix] * self.value[ix];
        }
        for (std::size_t k = 0; k < sp.axis; ++k) {
          const std::size_t ix = base + k * sp.inner;
          pa.grad[ix] += self.value[ix] * (self.grad[ix] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm: scalar input");
  const std::size_t N = s.back();
  if (gamma.numel() != N || beta.numel() != N) {
    throw DimensionError("layer_norm: affine size does not match last axis of " +
                         shape_str(s));
  }
  const std::size_t rows = x.numel() / N;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> mu(rows), inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * N;
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i) m += xr[i];
    m /= double(N);
    double var = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double dlt = xr[i] - m;
      var += dlt * dlt;
    }
    var /= double(N);
    const double iv = 1.0 / std::sqrt(var + eps);
    mu[r] = m;
    inv[r] = iv;
    double* orow = out.data() + r * N;
    for (std::size_t i = 0; i < N; ++i)
      orow[i] = (xr[i] - m) * iv * gv[i] + bv[i];
  }
  return make_op(
      s, std::move(out), {x, gamma, beta},
      [N, rows, mu, inv](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* xv = px.value.data();
        const double* gv = pg.value.data();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = xv + r * N;
          const double* gr = self.grad.data() + r * N;
          const double m = mu[r];
          const double iv = inv[r];
          if (pg.requires_grad || pb.requires_grad) {
            for (std::size_t i = 0; i < N; ++i) {
              const double xhat = (xr[i] - m) * iv;
              if (pg.requires_grad) pg.grad[i] += gr[i] * xhat;
              if (pb.requires_grad) pb.grad[i] += gr[i];
            }
          }
          if (px.requires_grad) {
            double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
              const double dxhat = gr[i] * gv[i];
              sum_dxhat += dxhat;
              sum_dxhat_xc += dxhat * (xr[i] - m);
            }
            const double dvar = -0.5 * sum_dxhat_xc * iv * iv * iv;
            double sum_xc = 0.0;
            for (std::size_t i = 0; i < N; ++i) sum_xc += xr[i] - m;
            const double dmu =
                -iv * sum_dxhat + dvar * (-2.0 / double(N)) * sum_xc;
            double* dxr = px.grad.data() + r * N;
            for (std::size_t i = 0; i < N; ++i) {
              const double dxhat = gr[i] * gv[i];
              dxr[i] += dxhat * iv + dvar * 2.0 * (xr[i] - m) / double(N) +
                        dmu / double(N);
            }
          }
        }
      });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, bool training,
                    double momentum, double eps) {
  if (x.ndim() != 4) {
    throw DimensionError("batch_norm2d: expected [B,C,H,W], got " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C) {
    throw DimensionError("batch_norm2d: affine/buffer size mismatch for " +
                         shape_str(x.shape()));
  }
  const std::size_t plane = H * W;
  const std::size_t N = B * plane;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> mu(C), inv(C);

  if (training) {
    auto& rm = running_mean.values();
    auto& rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xv.data() + (b * C + c) * plane;
        for (std::size_t q = 0; q < plane; ++q) m += p[q];
      }
      m /= double(N);
      double var = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xv.data() + (b * C + c) * plane;
        for (std::size_t q = 0; q < plane; ++q) {
          const double dlt = p[q] - m;
          var += dlt * dlt;
        }
      }
      var /= double(N);
      mu[c] = m;
      inv[c] = 1.0 / std::sqrt(var + eps);
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var;
      const double g = gv[c], bb = bv[c], iv = inv[c];
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xv.data() + (b * C + c) * plane;
        double* o = out.data() + (b * C + c) * plane;
        for (std::size_t q = 0; q < plane; ++q) o[q] = (p[q] - m) * iv * g + bb;
      }
    }
  } else {
    const auto& rm = running_mean.values();
    const auto& rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv[c] = 1.0 / std::sqrt(rv[c] + eps);
      const double g = gv[c], bb = bv[c], m = mu[c], iv = inv[c];
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = xv.data() + (b * C + c) * plane;
        double* o = out.data() + (b * C + c) * plane;
        for (std::size_t q = 0; q < plane; ++q) o[q] = (p[q] - m) * iv * g + bb;
      }
    }
  }

  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [B, C, plane, N, mu, inv, training](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* xv = px.value.data();
        const double* gv = pg.value.data();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
          const double m = mu[c], iv = inv[c], g = gv[c];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < B; ++b) {
            const double* p = xv + (b * C + c) * plane;
            const double* dy = self.grad.data() + (b * C + c) * plane;
            for (std::size_t q = 0; q < plane; ++q) {
              sum_dy += dy[q];
              sum_dy_xhat += dy[q] * (p[q] - m) * iv;
            }
          }
          if (pg.requires_grad) pg.grad[c] += sum_dy_xhat;
          if (pb.requires_grad) pb.grad[c] += sum_dy;
          if (!px.requires_grad) continue;
          if (training) {
            // Through the batch statistics.
            for (std::size_t b = 0; b < B; ++b) {
              const double* p = xv + (b * C + c) * plane;
              const double* dy = self.grad.data() + (b * C + c) * plane;
              double* dx = px.grad.data() + (b * C + c) * plane;
              for (std::size_t q = 0; q < plane; ++q) {
                const double xhat = (p[q] - m) * iv;
                dx[q] += g * iv *
                         (dy[q] - sum_dy / double(N) -
                          xhat * sum_dy_xhat / double(N));
              }
            }
          } else {
            const double giv = g * iv;
            for (std::size_t b = 0; b < B; ++b) {
              const double* dy = self.grad.data() + (b * C + c) * plane;
              double* dx = px.grad.data() + (b * C + c) * plane;
              for (std::size_t q = 0; q < plane; ++q) dx[q] += dy[q] * giv;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Dropout / pooling

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ContractError("dropout: p must lie in [0,1), got " +
                        std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  const auto& xv = x.values();
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
    out[i] = xv[i] * mask[i];
  }
  return make_op(x.shape(), std::move(out), {x},
                 [mask = std::move(mask)](Node& self) {
                   Node& pa = *self.parents[0];
                   if (!pa.requires_grad) return;
                   pa.ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     pa.grad[i] += self.grad[i] * mask[i];
                 });
}

Tensor global_average_pool(const Tensor& x) {
  if (x.ndim() != 4) {
    throw DimensionError("global_average_pool: expected [B,C,H,W], got " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  const auto& xv = x.values();
  std::vector<double> out(B * C, 0.0);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* p = xv.data() + bc * plane;
    double acc = 0.0;
    for (std::size_t q = 0; q < plane; ++q) acc += p[q];
    out[bc] = acc / double(plane);
  }
  return make_op(Shape{B, C}, std::move(out), {x}, [plane](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const double scl = 1.0 / double(plane);
    for (std::size_t bc = 0; bc < self.grad.size(); ++bc) {
      const double g = self.grad[bc] * scl;
      double* dx = pa.grad.data() + bc * plane;
      for (std::size_t q = 0; q < plane; ++q) dx[q] += g;
    }
  });
}

}  // namespace effloc
