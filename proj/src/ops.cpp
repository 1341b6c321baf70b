// SPDX-License-Identifier: Apache-2.0
#include "cspan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "cspan/error.hpp"

namespace cspan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap mmap(Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

// Applies f(grad_out, target) if the input wants a gradient.
template <typename F>
void accumulate(Tape& tape, Var in, F&& f) {
  if (Tensor* g = tape.grad_target(in.id())) f(*g);
}

}  // namespace

Mask key_mask(const std::vector<std::size_t>& lengths, std::size_t rows_per_batch,
              std::size_t length) {
  Mask m(lengths.size() * rows_per_batch * length, 0);
  std::size_t k = 0;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t r = 0; r < rows_per_batch; ++r) {
      for (std::size_t j = 0; j < length; ++j) m[k++] = j < lengths[b] ? 1 : 0;
    }
  }
  return m;
}

Var matmul(Var a, Var b, bool ta, bool tb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  const std::size_t m = ta ? av.dim(1) : av.dim(0);
  const std::size_t k = ta ? av.dim(0) : av.dim(1);
  const std::size_t kb = tb ? bv.dim(1) : bv.dim(0);
  const std::size_t n = tb ? bv.dim(0) : bv.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(av.shape()) +
                     (ta ? "^T" : "") + " x " + shape_str(bv.shape()) + (tb ? "^T" : ""));
  }
  Tensor c({m, n});
  auto A = cmap(av, 0, av.dim(0), av.dim(1));
  auto B = cmap(bv, 0, bv.dim(0), bv.dim(1));
  auto C = mmap(c, 0, m, n);
  if (!ta && !tb) C.noalias() = A * B;
  else if (ta && !tb) C.noalias() = A.transpose() * B;
  else if (!ta && tb) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();

  return a.tape().record("matmul", std::move(c), {a, b}, [a, b, ta, tb](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    auto A = cmap(av, 0, av.dim(0), av.dim(1));
    auto B = cmap(bv, 0, bv.dim(0), bv.dim(1));
    auto G = cmap(g, 0, g.dim(0), g.dim(1));
    if (Tensor* ga = t.grad_target(a.id())) {
      auto GA = mmap(*ga, 0, av.dim(0), av.dim(1));
      if (!ta) {
        if (!tb) GA.noalias() += G * B.transpose();
        else GA.noalias() += G * B;
      } else {
        if (!tb) GA.noalias() += B * G.transpose();
        else GA.noalias() += B.transpose() * G.transpose();
      }
    }
    if (Tensor* gb = t.grad_target(b.id())) {
      auto GB = mmap(*gb, 0, bv.dim(0), bv.dim(1));
      if (!tb) {
        if (!ta) GB.noalias() += A.transpose() * G;
        else GB.noalias() += A * G;
      } else {
        if (!ta) GB.noalias() += G.transpose() * A;
        else GB.noalias() += G.transpose() * A.transpose();
      }
    }
  });
}

Var batched_matmul(Var a, Var b, bool tb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("batched_matmul", av, 3);
  require_rank("batched_matmul", bv, 3);
  const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
  const std::size_t kb = tb ? bv.dim(2) : bv.dim(1);
  const std::size_t n = tb ? bv.dim(1) : bv.dim(2);
  if (bv.dim(0) != batch || kb != k) {
    throw ShapeError("batched_matmul: incompatible " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()) + (tb ? "^T" : ""));
  }
  const std::size_t br = bv.dim(1), bc = bv.dim(2);
  Tensor c({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    auto A = cmap(av, i * m * k, m, k);
    auto B = cmap(bv, i * br * bc, br, bc);
    auto C = mmap(c, i * m * n, m, n);
    if (tb) C.noalias() = A * B.transpose();
    else C.noalias() = A * B;
  }
  return a.tape().record(
      "batched_matmul", std::move(c), {a, b}, [a, b, tb, batch, m, k, n, br, bc](Tape& t, const Tensor& g) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        Tensor* ga = t.grad_target(a.id());
        Tensor* gb = t.grad_target(b.id());
        for (std::size_t i = 0; i < batch; ++i) {
          auto A = cmap(av, i * m * k, m, k);
          auto B = cmap(bv, i * br * bc, br, bc);
          auto G = cmap(g, i * m * n, m, n);
          if (ga) {
            auto GA = mmap(*ga, i * m * k, m, k);
            if (tb) GA.noalias() += G * B;
            else GA.noalias() += G * B.transpose();
          }
          if (gb) {
            auto GB = mmap(*gb, i * br * bc, br, bc);
            if (tb) GB.noalias() += G.transpose() * A;
            else GB.noalias() += A.transpose() * G;
          }
        }
      });
}

Var transpose_last2(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 3) {
    throw ShapeError("transpose_last2: expected rank 2 or 3, got " + shape_str(xv.shape()));
  }
  const std::size_t batch = xv.rank() == 3 ? xv.dim(0) : 1;
  const std::size_t r = xv.dim(xv.rank() - 2), c = xv.dim(xv.rank() - 1);
  Shape out_shape = xv.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor y(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    mmap(y, b * r * c, c, r) = cmap(xv, b * r * c, r, c).transpose();
  }
  return x.tape().record("transpose", std::move(y), {x}, [x, batch, r, c](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t b = 0; b < batch; ++b) {
        mmap(gx, b * r * c, r, c) += cmap(g, b * r * c, c, r).transpose();
      }
    });
  });
}

Var row_softmax(Var x, const Mask& mask) {
  const Tensor& xv = x.value();
  if (!mask.empty() && mask.size() != xv.size()) {
    throw ShapeError("row_softmax: mask has " + std::to_string(mask.size()) +
                     " entries for tensor " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.cols(), rows = xv.rows();
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    auto valid = [&](std::size_t j) { return mask.empty() || mask[base + j]; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (valid(j)) mx = std::max(mx, xv[base + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateRowError("row_softmax: row " + std::to_string(r) + " has no valid entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (valid(j)) {
        y[base + j] = std::exp(xv[base + j] - mx);
        z += y[base + j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) y[base + j] /= z;
  }
  const std::size_t id_hint = x.tape().size();
  return x.tape().record("row_softmax", std::move(y), {x}, [x, n, rows, id_hint](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(id_hint);
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += yv[base + j] * g[base + j];
        for (std::size_t j = 0; j < n; ++j) gx[base + j] += yv[base + j] * (g[base + j] - dot);
      }
    });
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  if (n == 0) throw ShapeError("layer_norm: empty feature axis");
  if (gamma.value().shape() != Shape{n} || beta.value().shape() != Shape{n}) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.value().shape()) + "/" +
                     shape_str(beta.value().shape()) + " do not match feature width " +
                     std::to_string(n));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[base + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[base + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[base + j] = (xv[base + j] - mu) * inv_std[r];
      y[base + j] = gv[j] * xhat[base + j] + bv[j];
    }
  }
  return x.tape().record(
      "layer_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const Tensor& gv = gamma.value();
        if (Tensor* gx = t.grad_target(x.id())) {
          std::vector<double> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * n;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = g[base + j] * gv[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[base + j];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              (*gx)[base + j] += inv_std[r] * (dxhat[j] - m1 - xhat[base + j] * m2);
            }
          }
        }
        if (Tensor* gg = t.grad_target(gamma.id())) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += g[r * n + j] * xhat[r * n + j];
        }
        if (Tensor* gb = t.grad_target(beta.id())) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[r * n + j];
        }
      });
}

Var tanh(Var x) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
  const std::size_t self = x.tape().size();
  return x.tape().record("tanh", std::move(y), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(self);
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
  });
}

Var sigmoid(Var x) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    // split by sign so exp never overflows
    y[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const std::size_t self = x.tape().size();
  return x.tape().record("sigmoid", std::move(y), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(self);
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape().record("add", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  });
}

Var subtract(Var a, Var b) {
  require_same_shape("subtract", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.tape().record("subtract", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  });
}

Var scale(Var x, double s) {
  Tensor y = x.value();
  for (auto& v : y.data()) v *= s;
  return x.tape().record("scale", std::move(y), {x}, [x, s](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.tape().record("hadamard", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    });
    accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

Var add_broadcast(Var x, Var y) {
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  const Shape& xs = xv.shape();
  const Shape& ys = yv.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw ShapeError("add_broadcast: " + shape_str(ys) + " is not a suffix of " + shape_str(xs));
  }
  const std::size_t block = yv.size();
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i % block];
  return x.tape().record("add_broadcast", std::move(out), {x, y}, [x, y, block](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    accumulate(t, y, [&](Tensor& gy) {
      for (std::size_t i = 0; i < g.size(); ++i) gy[i % block] += g[i];
    });
  });
}

Var concat_columns(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rows() != bv.rows() ||
      !std::equal(av.shape().begin(), av.shape().end() - 1, bv.shape().begin())) {
    throw ShapeError("concat_columns: leading shapes differ, " + shape_str(av.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  const std::size_t ca = av.cols(), cb = bv.cols(), rows = av.rows();
  Shape s = av.shape();
  s.back() = ca + cb;
  Tensor y(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data().begin() + r * ca, ca, y.data().begin() + r * (ca + cb));
    std::copy_n(bv.data().begin() + r * cb, cb, y.data().begin() + r * (ca + cb) + ca);
  }
  return a.tape().record("concat_columns", std::move(y), {a, b}, [a, b, ca, cb, rows](Tape& t, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += g[r * (ca + cb) + j];
    });
    accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cb; ++j) gb[r * cb + j] += g[r * (ca + cb) + ca + j];
    });
  });
}

Var slice_columns(Var x, std::size_t begin, std::size_t width) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  if (begin + width > n) {
    throw ShapeError("slice_columns: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + width) + ") out of range for " + shape_str(xv.shape()));
  }
  Shape s = xv.shape();
  s.back() = width;
  Tensor y(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data().begin() + r * n + begin, width, y.data().begin() + r * width);
  }
  return x.tape().record("slice_columns", std::move(y), {x}, [x, begin, width, n, rows](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) gx[r * n + begin + j] += g[r * width + j];
    });
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor({1}, s), {x}, [x](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (auto& v : gx.data()) v += g[0];
    });
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var gather_steps(Var x, const std::vector<long>& steps) {
  const Tensor& xv = x.value();
  require_rank("gather_steps", xv, 3);
  const std::size_t batch = xv.dim(0), len = xv.dim(1), n = xv.dim(2);
  if (steps.size() != batch) {
    throw ShapeError("gather_steps: " + std::to_string(steps.size()) + " steps for batch " +
                     std::to_string(batch));
  }
  Tensor y({batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    if (steps[b] < 0) continue;
    if (static_cast<std::size_t>(steps[b]) >= len) throw ShapeError("gather_steps: step out of range");
    std::copy_n(xv.data().begin() + (b * len + steps[b]) * n, n, y.data().begin() + b * n);
  }
  return x.tape().record("gather_steps", std::move(y), {x}, [x, steps, len, n](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t b = 0; b < steps.size(); ++b) {
        if (steps[b] < 0) continue;
        for (std::size_t j = 0; j < n; ++j) gx[(b * len + steps[b]) * n + j] += g[b * n + j];
      }
    });
  });
}

Var scatter_steps(const std::vector<Var>& steps, const std::vector<std::vector<long>>& positions,
                  std::size_t length) {
  if (steps.empty() || steps.size() != positions.size()) {
    throw ShapeError("scatter_steps: need one position list per step");
  }
  const Tensor& first = steps.front().value();
  require_rank("scatter_steps", first, 2);
  const std::size_t batch = first.dim(0), n = first.dim(1);
  Tensor y({batch, length, n});
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const Tensor& sv = steps[s].value();
    if (sv.shape() != first.shape() || positions[s].size() != batch) {
      throw ShapeError("scatter_steps: inconsistent step " + std::to_string(s));
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const long p = positions[s][b];
      if (p < 0) continue;
      if (static_cast<std::size_t>(p) >= length) throw ShapeError("scatter_steps: position out of range");
      std::copy_n(sv.data().begin() + b * n, n, y.data().begin() + (b * length + p) * n);
    }
  }
  return steps.front().tape().record(
      "scatter_steps", std::move(y), steps, [steps, positions, length, batch, n](Tape& t, const Tensor& g) {
        for (std::size_t s = 0; s < steps.size(); ++s) {
          accumulate(t, steps[s], [&](Tensor& gs) {
            for (std::size_t b = 0; b < batch; ++b) {
              const long p = positions[s][b];
              if (p < 0) continue;
              for (std::size_t j = 0; j < n; ++j) gs[b * n + j] += g[(b * length + p) * n + j];
            }
          });
        }
      });
}

Var embedding_lookup(Var table, const std::vector<std::size_t>& ids, std::size_t batch,
                     std::size_t length, std::size_t pad_id) {
  const Tensor& tv = table.value();
  require_rank("embedding_lookup", tv, 2);
  if (ids.size() != batch * length) throw ShapeError("embedding_lookup: id grid size mismatch");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor y({batch, length, d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw ContractError("embedding_lookup: id " + std::to_string(ids[i]) +
                          " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.data().begin() + ids[i] * d, d, y.data().begin() + i * d);
  }
  return table.tape().record("embedding_lookup", std::move(y), {table}, [table, ids, d, pad_id](Tape& t, const Tensor& g) {
    accumulate(t, table, [&](Tensor& gt) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == pad_id) continue;
        for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
      }
    });
  });
}

Var relative_gather(Var x, std::size_t clip) {
  const Tensor& xv = x.value();
  require_rank("relative_gather", xv, 3);
  const std::size_t batch = xv.dim(0), len = xv.dim(1), k = xv.dim(2);
  if (k != 2 * clip + 1) {
    throw ShapeError("relative_gather: last axis " + std::to_string(k) + " != 2*clip+1 for clip " +
                     std::to_string(clip));
  }
  auto index = [clip](std::size_t i, std::size_t j) {
    const long rel = static_cast<long>(j) - static_cast<long>(i);
    const long c = static_cast<long>(clip);
    return static_cast<std::size_t>(std::clamp(rel, -c, c) + c);
  };
  Tensor y({batch, len, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) y.at(b, i, j) = xv.at(b, i, index(i, j));
  return x.tape().record("relative_gather", std::move(y), {x}, [x, batch, len, index](Tape& t, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < len; ++i)
          for (std::size_t j = 0; j < len; ++j) gx.at(b, i, index(i, j)) += g.at(b, i, j);
    });
  });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t n = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < n; ++j) p.at(r, j) = std::exp(z[j] - mx) / s;
  }
  return p;
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& z = logits.value();
  require_rank("cross_entropy", z, 2);
  const std::size_t rows = z.dim(0), classes = z.dim(1);
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    total += mx + std::log(s) - row[labels[r]];
  }
  const double loss = total / static_cast<double>(rows);
  return logits.tape().record("cross_entropy", Tensor({1}, loss), {logits}, [logits, labels](Tape& t, const Tensor& g) {
    accumulate(t, logits, [&](Tensor& gz) {
      const Tensor p = softmax_rows(logits.value());
      const double w = g[0] / static_cast<double>(labels.size());
      for (std::size_t r = 0; r < labels.size(); ++r) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
          gz.at(r, j) += w * (p.at(r, j) - (j == labels[r] ? 1.0 : 0.0));
        }
      }
    });
  });
}

}  // namespace cspan
