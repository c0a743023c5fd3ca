#pragma once

#include <cmath>
#include <numbers>

#include "attnkit/tensor.hpp"

namespace attnkit {

// Additive value used to mask disallowed score entries before softmax.
inline constexpr double kMaskValue = -1e30;

// Transformer-layer weights: four H1 x H1 attention projections plus the
// two MLP matrices (H1 x H2 and H2 x H1).
template <std::floating_point T>
struct LayerWeights {
  Tensor<T> w_q, w_k, w_v, w_o;  // [H1, H1]
  Tensor<T> w_1;                 // [H1, H2]
  Tensor<T> w_2;                 // [H2, H1]

  static LayerWeights zeros(std::int64_t h1, std::int64_t h2) {
    return {Tensor<T>({h1, h1}), Tensor<T>({h1, h1}), Tensor<T>({h1, h1}),
            Tensor<T>({h1, h1}), Tensor<T>({h1, h2}), Tensor<T>({h2, h1})};
  }

  static LayerWeights random(std::int64_t h1, std::int64_t h2, std::uint64_t seed, T scale) {
    return {Tensor<T>::random_uniform({h1, h1}, seed + 0, -scale, scale),
            Tensor<T>::random_uniform({h1, h1}, seed + 1, -scale, scale),
            Tensor<T>::random_uniform({h1, h1}, seed + 2, -scale, scale),
            Tensor<T>::random_uniform({h1, h1}, seed + 3, -scale, scale),
            Tensor<T>::random_uniform({h1, h2}, seed + 4, -scale, scale),
            Tensor<T>::random_uniform({h2, h1}, seed + 5, -scale, scale)};
  }
};

// Per-layer key/value cache, K and V stored as [B, S_cached, H1]. Single
// writer: a cache must not be shared across concurrent decode steps.
template <std::floating_point T>
struct KvCache {
  Tensor<T> k, v;

  bool empty() const { return k.rank() == 0; }
  std::int64_t cached_len() const { return empty() ? 0 : k.extent(1); }

  void store(Tensor<T> k_new, Tensor<T> v_new) {
    if (!k_new.same_shape(v_new) || k_new.rank() != 3)
      throw ShapeError("kv_cache: K/V must share a [B,S,H1] shape");
    k = std::move(k_new);
    v = std::move(v_new);
  }

  // Appends one token's K/V rows ([B,1,H1]); cached length grows by 1.
  void append(const Tensor<T>& k_row, const Tensor<T>& v_row) {
    if (!k_row.same_shape(v_row) || k_row.rank() != 3 || k_row.extent(1) != 1)
      throw ShapeError("kv_cache: append expects [B,1,H1] rows");
    if (empty()) {
      store(k_row, v_row);
      return;
    }
    const std::int64_t b = k.extent(0), s = k.extent(1), h1 = k.extent(2);
    if (k_row.extent(0) != b || k_row.extent(2) != h1)
      throw ShapeError("kv_cache: appended rows disagree with cache shape");
    Tensor<T> nk({b, s + 1, h1}), nv({b, s + 1, h1});
    for (std::int64_t bi = 0; bi < b; ++bi) {
      for (std::int64_t si = 0; si < s; ++si) {
        for (std::int64_t hi = 0; hi < h1; ++hi) {
          nk(bi, si, hi) = k(bi, si, hi);
          nv(bi, si, hi) = v(bi, si, hi);
        }
      }
      for (std::int64_t hi = 0; hi < h1; ++hi) {
        nk(bi, s, hi) = k_row(bi, 0, hi);
        nv(bi, s, hi) = v_row(bi, 0, hi);
      }
    }
    k = std::move(nk);
    v = std::move(nv);
  }
};

// tanh-approximation GELU; the fixed activation used by the layer oracle.
template <std::floating_point T>
T gelu(T x) {
  const double v = static_cast<double>(x);
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return static_cast<T>(0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v))));
}

// Brute-force attention: materializes the full score matrix per (batch,
// head), applies the additive causal mask, softmaxes, multiplies by V.
// Q may have a shorter sequence than K/V (decode); causal masking assumes
// equal lengths.
template <std::floating_point T>
Tensor<T> std_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                        bool causal) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4)
    throw ShapeError("std_attention: [B,S,N,D] operands required");
  if (!k.same_shape(v)) throw ShapeError("std_attention: K/V shape mismatch");
  const std::int64_t b = q.extent(0), sq = q.extent(1), n = q.extent(2), d = q.extent(3);
  const std::int64_t sk = k.extent(1);
  if (k.extent(0) != b || k.extent(2) != n || k.extent(3) != d)
    throw ShapeError("std_attention: Q/K shape mismatch");
  if (causal && sq != sk)
    throw ShapeError("std_attention: causal masking requires equal lengths");

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor<T> out({b, sq, n, d});
  Tensor<T> scores({sq, sk});
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t ni = 0; ni < n; ++ni) {
      for (std::int64_t i = 0; i < sq; ++i) {
        for (std::int64_t j = 0; j < sk; ++j) {
          double dot = 0.0;
          for (std::int64_t di = 0; di < d; ++di)
            dot += static_cast<double>(q(bi, i, ni, di)) * static_cast<double>(k(bi, j, ni, di));
          double s = dot * inv_sqrt_d;
          if (causal && j > i) s += kMaskValue;
          scores(i, j) = static_cast<T>(s);
        }
      }
      const Tensor<T> p = softmax_rows(scores);
      for (std::int64_t i = 0; i < sq; ++i) {
        for (std::int64_t di = 0; di < d; ++di) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < sk; ++j)
            acc += static_cast<double>(p(i, j)) * static_cast<double>(v(bi, j, ni, di));
          out(bi, i, ni, di) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

namespace detail {

// [B,S,H1] x [H1,H2] batched over B.
template <std::floating_point T>
Tensor<T> bmm(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 3 || w.rank() != 2 || x.extent(2) != w.extent(0))
    throw ShapeError("bmm: shape mismatch");
  const std::int64_t b = x.extent(0), s = x.extent(1);
  Tensor<T> out({b, s, w.extent(1)});
  for (std::int64_t bi = 0; bi < b; ++bi) {
    const Tensor<T> xi = block_view(x, {bi, 0, 0}, {1, s, x.extent(2)})
                             .to_tensor()
                             .reshaped({s, x.extent(2)});
    const Tensor<T> y = matmul(xi, w);
    for (std::int64_t si = 0; si < s; ++si)
      for (std::int64_t j = 0; j < w.extent(1); ++j) out(bi, si, j) = y(si, j);
  }
  return out;
}

template <std::floating_point T>
Tensor<T> gelu_map(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

}  // namespace detail

// One transformer-layer prefill pass. Computes the K/V/Q projections,
// causal multi-head attention with output projection and residual, then the
// MLP with residual. K/V land in the cache as [B,S,H1]. No normalization
// layers; heads come from H1 = heads * head_dim.
template <std::floating_point T>
Tensor<T> prefill_layer(const Tensor<T>& x, const LayerWeights<T>& w, KvCache<T>& cache,
                        std::int64_t heads) {
  if (x.rank() != 3) throw ShapeError("prefill_layer: [B,S,H1] input required");
  const std::int64_t b = x.extent(0), s = x.extent(1), h1 = x.extent(2);
  if (heads <= 0 || h1 % heads != 0) throw ShapeError("prefill_layer: H1 must be heads*D");
  const std::int64_t d = h1 / heads;

  Tensor<T> x_k = detail::bmm(x, w.w_k);
  Tensor<T> x_v = detail::bmm(x, w.w_v);
  Tensor<T> x_q = detail::bmm(x, w.w_q);

  const Tensor<T> attn = std_attention(x_q.reshaped({b, s, heads, d}),
                                       x_k.reshaped({b, s, heads, d}),
                                       x_v.reshaped({b, s, heads, d}), /*causal=*/true)
                             .reshaped({b, s, h1});
  const Tensor<T> x_o = add(detail::bmm(attn, w.w_o), x);
  cache.store(std::move(x_k), std::move(x_v));

  const Tensor<T> hidden = detail::gelu_map(detail::bmm(x_o, w.w_1));
  return add(detail::bmm(hidden, w.w_2), x_o);
}

// One decode step: appends the token's K/V to the cache, attends the single
// query against the full cache, applies output projection, residual, MLP.
template <std::floating_point T>
Tensor<T> decode_step(const Tensor<T>& t, const LayerWeights<T>& w, KvCache<T>& cache,
                      std::int64_t heads) {
  if (t.rank() != 3 || t.extent(1) != 1)
    throw ShapeError("decode_step: [B,1,H1] input required");
  if (cache.empty()) throw ShapeError("decode_step: cache is empty");
  const std::int64_t b = t.extent(0), h1 = t.extent(2);
  if (cache.k.extent(0) != b || cache.k.extent(2) != h1)
    throw ShapeError("decode_step: cache shape drift");
  if (heads <= 0 || h1 % heads != 0) throw ShapeError("decode_step: H1 must be heads*D");
  const std::int64_t d = h1 / heads;

  cache.append(detail::bmm(t, w.w_k), detail::bmm(t, w.w_v));
  const Tensor<T> t_q = detail::bmm(t, w.w_q);
  const std::int64_t sc = cache.cached_len();

  const Tensor<T> attn = std_attention(t_q.reshaped({b, std::int64_t{1}, heads, d}),
                                       cache.k.reshaped({b, sc, heads, d}),
                                       cache.v.reshaped({b, sc, heads, d}),
                                       /*causal=*/false)
                             .reshaped({b, std::int64_t{1}, h1});
  const Tensor<T> t_o = add(detail::bmm(attn, w.w_o), t);
  const Tensor<T> hidden = detail::gelu_map(detail::bmm(t_o, w.w_1));
  return add(detail::bmm(hidden, w.w_2), t_o);
}

}  // namespace attnkit
