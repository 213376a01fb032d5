#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pignet/tensor.hpp"

namespace pignet {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) {
    throw dimension_error(std::string(op) + " expects a matrix, got shape " +
                          shape_str(a.shape()));
  }
}

template <typename T>
auto parents_of(std::initializer_list<Tensor<T>> ts) {
  std::vector<std::shared_ptr<Node<T>>> out;
  for (const auto& t : ts) out.push_back(t.node_ptr());
  return out;
}

}  // namespace detail

/// Matrix product a[m×k] · b[k×p].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw dimension_error("matmul inner extents disagree: " +
                          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<T> out(m * p);
  detail::MutMap<T>(out.data(), m, p).noalias() =
      detail::ConstMap<T>(a.data().data(), m, k) *
      detail::ConstMap<T>(b.data().data(), k, p);
  return detail::make_result<T>(
      {m, p}, std::move(out), detail::parents_of({a, b}),
      [m, k, p](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        auto& nb = *self.parents[1];
        detail::ConstMap<T> g(self.grad.data(), m, p);
        if (na.requires_grad) {
          na.ensure_grad();
          detail::MutMap<T>(na.grad.data(), m, k).noalias() +=
              g * detail::ConstMap<T>(nb.data.data(), k, p).transpose();
        }
        if (nb.requires_grad) {
          nb.ensure_grad();
          detail::MutMap<T>(nb.grad.data(), k, p).noalias() +=
              detail::ConstMap<T>(na.data.data(), m, k).transpose() * g;
        }
      });
}

/// Per-group product: rows of x are split into `groups` equal blocks of n
/// rows; block g is multiplied by the g-th k×p block of a (a is (groups·k)×p).
template <typename T>
Tensor<T> grouped_matmul(const Tensor<T>& x, const Tensor<T>& a,
                         std::size_t groups) {
  detail::require_matrix(x, "grouped_matmul");
  detail::require_matrix(a, "grouped_matmul");
  if (groups == 0 || x.dim(0) % groups != 0 || a.dim(0) % groups != 0) {
    throw dimension_error("grouped_matmul: shapes " + shape_str(x.shape()) +
                          " and " + shape_str(a.shape()) +
                          " do not split into " + std::to_string(groups) +
                          " groups");
  }
  const std::size_t n = x.dim(0) / groups, k = x.dim(1), p = a.dim(1);
  if (a.dim(0) / groups != k) {
    throw dimension_error("grouped_matmul inner extents disagree: " +
                          shape_str(x.shape()) + " x " + shape_str(a.shape()));
  }
  std::vector<T> out(groups * n * p);
  for (std::size_t g = 0; g < groups; ++g) {
    detail::MutMap<T>(out.data() + g * n * p, n, p).noalias() =
        detail::ConstMap<T>(x.data().data() + g * n * k, n, k) *
        detail::ConstMap<T>(a.data().data() + g * k * p, k, p);
  }
  return detail::make_result<T>(
      {groups * n, p}, std::move(out), detail::parents_of({x, a}),
      [groups, n, k, p](detail::Node<T>& self) {
        auto& nx = *self.parents[0];
        auto& na = *self.parents[1];
        if (nx.requires_grad) nx.ensure_grad();
        if (na.requires_grad) na.ensure_grad();
        for (std::size_t g = 0; g < groups; ++g) {
          detail::ConstMap<T> gr(self.grad.data() + g * n * p, n, p);
          if (nx.requires_grad) {
            detail::MutMap<T>(nx.grad.data() + g * n * k, n, k).noalias() +=
                gr * detail::ConstMap<T>(na.data.data() + g * k * p, k, p)
                         .transpose();
          }
          if (na.requires_grad) {
            detail::MutMap<T>(na.grad.data() + g * k * p, k, p).noalias() +=
                detail::ConstMap<T>(nx.data.data() + g * n * k, n, k)
                    .transpose() *
                gr;
          }
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_result<T>(
      {n, m}, std::move(out), detail::parents_of({a}),
      [m, n](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            na.grad[i * n + j] += self.grad[j * m + i];
      });
}

/// Same values under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw dimension_error("cannot reshape " + shape_str(a.shape()) + " to " +
                          shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(
      std::move(shape), std::move(out), detail::parents_of({a}),
      [](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          na.grad[i] += self.grad[i];
      });
}

/// Row-wise bias addition: x[m×k] + b[k].
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_matrix(x, "add_bias");
  const std::size_t m = x.dim(0), k = x.dim(1);
  if (b.size() != k) {
    throw dimension_error("bias of shape " + shape_str(b.shape()) +
                          " cannot be added to " + shape_str(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += b.data()[j];
  return detail::make_result<T>(
      {m, k}, std::move(out), detail::parents_of({x, b}),
      [m, k](detail::Node<T>& self) {
        auto& nx = *self.parents[0];
        auto& nb = *self.parents[1];
        if (nx.requires_grad) {
          nx.ensure_grad();
          for (std::size_t i = 0; i < m * k; ++i) nx.grad[i] += self.grad[i];
        }
        if (nb.requires_grad) {
          nb.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j)
              nb.grad[j] += self.grad[i * k + j];
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw dimension_error("add: shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " differ");
  }
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), detail::parents_of({a, b}),
      [](detail::Node<T>& self) {
        for (auto& parent : self.parents) {
          if (!parent->requires_grad) continue;
          parent->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            parent->grad[i] += self.grad[i];
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>(
      a.shape(), std::move(out), detail::parents_of({a}),
      [factor](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          na.grad[i] += factor * self.grad[i];
      });
}

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw dimension_error("mul: shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " differ");
  }
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), detail::parents_of({a, b}),
      [](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        auto& nb = *self.parents[1];
        if (na.requires_grad) {
          na.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            na.grad[i] += self.grad[i] * nb.data[i];
        }
        if (nb.requires_grad) {
          nb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            nb.grad[i] += self.grad[i] * na.data[i];
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (auto v : a.data()) total += v;
  return detail::make_result<T>({}, {total}, detail::parents_of({a}),
                                [](detail::Node<T>& self) {
                                  auto& na = *self.parents[0];
                                  na.ensure_grad();
                                  for (auto& g : na.grad) g += self.grad[0];
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a[i] > T{0} ? a[i] : T{0};
  return detail::make_result<T>(
      a.shape(), std::move(out), detail::parents_of({a}),
      [](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        // Subgradient at exactly zero is 0.
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (na.data[i] > T{0}) na.grad[i] += self.grad[i];
      });
}

/// Column maximum over each of `groups` equal row blocks: (groups·n)×k ->
/// groups×k. Backward routes each column's gradient to the first argmax.
template <typename T>
Tensor<T> segment_max(const Tensor<T>& a, std::size_t groups) {
  detail::require_matrix(a, "segment_max");
  if (groups == 0 || a.dim(0) == 0 || a.dim(0) % groups != 0) {
    throw domain_error("segment_max: cannot pool " + shape_str(a.shape()) +
                       " over " + std::to_string(groups) +
                       " non-empty groups");
  }
  const std::size_t n = a.dim(0) / groups, k = a.dim(1);
  std::vector<T> out(groups * k);
  std::vector<std::size_t> argmax(groups * k);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t best = g * n;
      T best_value = a.data()[best * k + j];
      for (std::size_t i = g * n + 1; i < (g + 1) * n; ++i) {
        if (a.data()[i * k + j] > best_value) {
          best_value = a.data()[i * k + j];
          best = i;
        }
      }
      out[g * k + j] = best_value;
      argmax[g * k + j] = best;
    }
  }
  return detail::make_result<T>(
      {groups, k}, std::move(out), detail::parents_of({a}),
      [groups, k, argmax = std::move(argmax)](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t j = 0; j < k; ++j)
            na.grad[argmax[g * k + j] * k + j] += self.grad[g * k + j];
      });
}

/// Column mean over each of `groups` equal row blocks.
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& a, std::size_t groups) {
  detail::require_matrix(a, "segment_mean");
  if (groups == 0 || a.dim(0) == 0 || a.dim(0) % groups != 0) {
    throw domain_error("segment_mean: cannot pool " + shape_str(a.shape()) +
                       " over " + std::to_string(groups) +
                       " non-empty groups");
  }
  const std::size_t n = a.dim(0) / groups, k = a.dim(1);
  std::vector<T> out(groups * k, T{0});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = g * n; i < (g + 1) * n; ++i)
      for (std::size_t j = 0; j < k; ++j) out[g * k + j] += a.data()[i * k + j];
    for (std::size_t j = 0; j < k; ++j) out[g * k + j] /= static_cast<T>(n);
  }
  return detail::make_result<T>(
      {groups, k}, std::move(out), detail::parents_of({a}),
      [groups, n, k](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        const T inv = T{1} / static_cast<T>(n);
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t i = g * n; i < (g + 1) * n; ++i)
            for (std::size_t j = 0; j < k; ++j)
              na.grad[i * k + j] += self.grad[g * k + j] * inv;
      });
}

/// Column-wise maximum over the point axis: n×k -> k.
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a) {
  detail::require_matrix(a, "reduce_max");
  if (a.dim(0) == 0) throw domain_error("reduce_max over empty point axis");
  return reshape(segment_max(a, 1), {a.dim(1)});
}

/// Column-wise mean over the point axis: n×k -> k.
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
  detail::require_matrix(a, "reduce_mean");
  if (a.dim(0) == 0) throw domain_error("reduce_mean over empty point axis");
  return reshape(segment_mean(a, 1), {a.dim(1)});
}

/// Repeats each row of a[g×k] `times` times: -> (g·times)×k. Gradients are
/// summed back over the repeated rows.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t times) {
  detail::require_matrix(a, "repeat_rows");
  const std::size_t g = a.dim(0), k = a.dim(1);
  std::vector<T> out(g * times * k);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(a.data().begin() + r * k, k,
                  out.begin() + (r * times + t) * k);
  return detail::make_result<T>(
      {g * times, k}, std::move(out), detail::parents_of({a}),
      [g, times, k](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t r = 0; r < g; ++r)
          for (std::size_t t = 0; t < times; ++t)
            for (std::size_t j = 0; j < k; ++j)
              na.grad[r * k + j] += self.grad[(r * times + t) * k + j];
      });
}

/// Channel-axis concatenation of matrices sharing a row count.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw usage_error("concat of zero tensors");
  for (const auto& p : parts) detail::require_matrix(p, "concat");
  const std::size_t m = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != m) {
      throw dimension_error("concat row counts disagree: " +
                            shape_str(parts.front().shape()) + " vs " +
                            shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < parts.size(); ++b) {
    const std::size_t w = widths[b];
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[b].data().begin() + i * w, w,
                  out.begin() + i * total + offset);
    offset += w;
  }
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  for (const auto& p : parts) parents.push_back(p.node_ptr());
  return detail::make_result<T>(
      {m, total}, std::move(out), std::move(parents),
      [m, total, widths = std::move(widths)](detail::Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t b = 0; b < widths.size(); ++b) {
          auto& np = *self.parents[b];
          const std::size_t w = widths[b];
          if (np.requires_grad) {
            np.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < w; ++j)
                np.grad[i * w + j] += self.grad[i * total + off + j];
          }
          off += w;
        }
      });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  return concat(std::vector<Tensor<T>>{a, b});
}

/// Columns [begin, end) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_cols");
  const std::size_t m = a.dim(0), k = a.dim(1);
  if (begin > end || end > k) {
    throw dimension_error("slice_cols [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") out of range for " +
                          shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<T> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + i * k + begin, w, out.begin() + i * w);
  return detail::make_result<T>(
      {m, w}, std::move(out), detail::parents_of({a}),
      [m, k, w, begin](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j)
            na.grad[i * k + begin + j] += self.grad[i * w + j];
      });
}

/// Sliding maximum along the channel axis, window 3, stride 1, with the
/// window clipped at the edges so the width is unchanged. Rows are
/// independent. Gradient goes to the first maximal entry of each window.
template <typename T>
Tensor<T> channel_window_max(const Tensor<T>& a) {
  detail::require_matrix(a, "channel_window_max");
  const std::size_t m = a.dim(0), k = a.dim(1);
  if (k == 0) throw domain_error("channel_window_max needs k >= 1");
  std::vector<T> out(m * k);
  std::vector<std::size_t> source(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = a.data().data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t lo = j == 0 ? 0 : j - 1;
      std::size_t hi = std::min(k - 1, j + 1);
      std::size_t best = lo;
      for (std::size_t c = lo + 1; c <= hi; ++c)
        if (row[c] > row[best]) best = c;
      out[i * k + j] = row[best];
      source[i * k + j] = i * k + best;
    }
  }
  return detail::make_result<T>(
      {m, k}, std::move(out), detail::parents_of({a}),
      [source = std::move(source)](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        for (std::size_t i = 0; i < source.size(); ++i)
          na.grad[source[i]] += self.grad[i];
      });
}

/// Batch statistics computed by batch_norm_train, exposed so the layer can
/// update its running estimates.
template <typename T>
struct BatchMoments {
  std::vector<T> mean;
  std::vector<T> var;  // population (biased)
};

/// Training-mode batch normalization over all rows of x[m×k].
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, T eps,
                           BatchMoments<T>* moments = nullptr) {
  detail::require_matrix(x, "batch_norm");
  const std::size_t m = x.dim(0), k = x.dim(1);
  if (gamma.size() != k || beta.size() != k) {
    throw dimension_error("batch_norm width " + std::to_string(gamma.size()) +
                          " does not match input " + shape_str(x.shape()));
  }
  if (m < 2) {
    throw degenerate_error(
        "batch_norm in train mode needs at least 2 samples, got " +
        std::to_string(m));
  }
  std::vector<T> mean(k, T{0}), var(k, T{0});
  const T* xd = x.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) mean[j] += xd[i * k + j];
  for (auto& v : mean) v /= static_cast<T>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      T d = xd[i * k + j] - mean[j];
      var[j] += d * d;
    }
  for (auto& v : var) v /= static_cast<T>(m);
  std::vector<T> inv_std(k);
  for (std::size_t j = 0; j < k; ++j) inv_std[j] = T{1} / std::sqrt(var[j] + eps);

  std::vector<T> xhat(m * k), out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      T h = (xd[i * k + j] - mean[j]) * inv_std[j];
      xhat[i * k + j] = h;
      out[i * k + j] = h * gamma[j] + beta[j];
    }
  if (moments) *moments = {mean, var};
  return detail::make_result<T>(
      {m, k}, std::move(out), detail::parents_of({x, gamma, beta}),
      [m, k, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& nx = *self.parents[0];
        auto& ng = *self.parents[1];
        auto& nb = *self.parents[2];
        std::vector<T> sum_g(k, T{0}), sum_gh(k, T{0});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            sum_g[j] += self.grad[i * k + j];
            sum_gh[j] += self.grad[i * k + j] * xhat[i * k + j];
          }
        if (ng.requires_grad) {
          ng.ensure_grad();
          for (std::size_t j = 0; j < k; ++j) ng.grad[j] += sum_gh[j];
        }
        if (nb.requires_grad) {
          nb.ensure_grad();
          for (std::size_t j = 0; j < k; ++j) nb.grad[j] += sum_g[j];
        }
        if (nx.requires_grad) {
          nx.ensure_grad();
          const T inv_m = T{1} / static_cast<T>(m);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const T g = self.grad[i * k + j];
              nx.grad[i * k + j] +=
                  ng.data[j] * inv_std[j] *
                  (g - inv_m * sum_g[j] - xhat[i * k + j] * inv_m * sum_gh[j]);
            }
        }
      });
}

/// Eval-mode batch normalization with fixed statistics.
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, std::span<const T> mean,
                          std::span<const T> var, T eps) {
  detail::require_matrix(x, "batch_norm");
  const std::size_t m = x.dim(0), k = x.dim(1);
  if (gamma.size() != k || beta.size() != k || mean.size() != k ||
      var.size() != k) {
    throw dimension_error("batch_norm width " + std::to_string(gamma.size()) +
                          " does not match input " + shape_str(x.shape()));
  }
  std::vector<T> inv_std(k), xhat(m * k), out(m * k);
  for (std::size_t j = 0; j < k; ++j) inv_std[j] = T{1} / std::sqrt(var[j] + eps);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      T h = (x.data()[i * k + j] - mean[j]) * inv_std[j];
      xhat[i * k + j] = h;
      out[i * k + j] = h * gamma[j] + beta[j];
    }
  return detail::make_result<T>(
      {m, k}, std::move(out), detail::parents_of({x, gamma, beta}),
      [m, k, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& nx = *self.parents[0];
        auto& ng = *self.parents[1];
        auto& nb = *self.parents[2];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const T g = self.grad[i * k + j];
            if (nx.requires_grad) {
              nx.ensure_grad();
              nx.grad[i * k + j] += g * ng.data[j] * inv_std[j];
            }
            if (ng.requires_grad) {
              ng.ensure_grad();
              ng.grad[j] += g * xhat[i * k + j];
            }
            if (nb.requires_grad) {
              nb.ensure_grad();
              nb.grad[j] += g;
            }
          }
      });
}

/// Mean over groups of ‖I − A_g·A_gᵀ‖²_F, where a stacks `groups` square
/// k×k blocks vertically.
template <typename T>
Tensor<T> orthogonality_penalty(const Tensor<T>& a, std::size_t groups = 1) {
  detail::require_matrix(a, "orthogonality_regularizer");
  const std::size_t k = a.dim(1);
  if (groups == 0 || a.dim(0) != groups * k) {
    throw dimension_error("orthogonality_regularizer needs square blocks, got " +
                          shape_str(a.shape()) + " for " +
                          std::to_string(groups) + " group(s)");
  }
  using Mat = detail::RowMatrix<T>;
  std::vector<Mat> residuals;
  T total{0};
  for (std::size_t g = 0; g < groups; ++g) {
    detail::ConstMap<T> ag(a.data().data() + g * k * k, k, k);
    Mat e = Mat::Identity(k, k) - ag * ag.transpose();
    total += e.squaredNorm();
    residuals.push_back(std::move(e));
  }
  total /= static_cast<T>(groups);
  return detail::make_result<T>(
      {}, {total}, detail::parents_of({a}),
      [groups, k, residuals = std::move(residuals)](detail::Node<T>& self) {
        auto& na = *self.parents[0];
        na.ensure_grad();
        // d/dA ‖I − AAᵀ‖² = −4 (I − AAᵀ) A
        const T coeff = T{-4} * self.grad[0] / static_cast<T>(groups);
        for (std::size_t g = 0; g < groups; ++g) {
          detail::ConstMap<T> ag(na.data.data() + g * k * k, k, k);
          detail::MutMap<T>(na.grad.data() + g * k * k, k, k).noalias() +=
              coeff * residuals[g] * ag;
        }
      });
}

/// Mean over rows of −log softmax(logits)[label], via log-sum-exp.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                std::span<const int> labels) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0), p = logits.dim(1);
  if (labels.size() != m) {
    throw dimension_error("softmax_cross_entropy: " +
                          std::to_string(labels.size()) + " labels for " +
                          std::to_string(m) + " rows");
  }
  if (m == 0) throw domain_error("softmax_cross_entropy over zero rows");
  std::vector<T> probs(m * p);
  T total{0};
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p) {
      throw data_error("label " + std::to_string(labels[i]) + " at point " +
                       std::to_string(i) + " outside [0, " +
                       std::to_string(p) + ")");
    }
    const T* row = logits.data().data() + i * p;
    T peak = *std::max_element(row, row + p);
    T z{0};
    for (std::size_t j = 0; j < p; ++j) {
      probs[i * p + j] = std::exp(row[j] - peak);
      z += probs[i * p + j];
    }
    for (std::size_t j = 0; j < p; ++j) probs[i * p + j] /= z;
    total += std::log(z) + peak - row[labels[i]];
  }
  total /= static_cast<T>(m);
  std::vector<int> targets(labels.begin(), labels.end());
  return detail::make_result<T>(
      {}, {total}, detail::parents_of({logits}),
      [m, p, probs = std::move(probs),
       targets = std::move(targets)](detail::Node<T>& self) {
        auto& nl = *self.parents[0];
        nl.ensure_grad();
        const T g = self.grad[0] / static_cast<T>(m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            T d = probs[i * p + j] - (static_cast<int>(j) == targets[i] ? T{1} : T{0});
            nl.grad[i * p + j] += g * d;
          }
      });
}

}  // namespace pignet
