#include <doctest.h>

#include <cmath>

#include "attnkit/attention_ref.hpp"

using namespace attnkit;

namespace {

// Independent position-by-position attention oracle: per query position,
// score every key, softmax in place, accumulate V.
TensorD position_loop_attention(const TensorD& q, const TensorD& k, const TensorD& v,
                                bool causal) {
  const std::int64_t b = q.extent(0), s = q.extent(1), n = q.extent(2), d = q.extent(3);
  TensorD out({b, s, n, d});
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ni = 0; ni < n; ++ni)
      for (std::int64_t i = 0; i < s; ++i) {
        std::vector<double> w(static_cast<std::size_t>(s));
        double mx = -1e300;
        for (std::int64_t j = 0; j < s; ++j) {
          double dot = 0;
          for (std::int64_t di = 0; di < d; ++di) dot += q(bi, i, ni, di) * k(bi, j, ni, di);
          w[j] = dot / std::sqrt(static_cast<double>(d));
          if (causal && j > i) w[j] = -1e290;
          mx = std::max(mx, w[j]);
        }
        double denom = 0;
        for (std::int64_t j = 0; j < s; ++j) denom += std::exp(w[j] - mx);
        for (std::int64_t di = 0; di < d; ++di) {
          double acc = 0;
          for (std::int64_t j = 0; j < s; ++j)
            acc += std::exp(w[j] - mx) / denom * v(bi, j, ni, di);
          out(bi, i, ni, di) = acc;
        }
      }
  return out;
}

}  // namespace

TEST_CASE("std_attention single-position output is V") {
  const TensorD q = TensorD::random_uniform({2, 1, 3, 4}, 1);
  const TensorD v = TensorD::random_uniform({2, 1, 3, 4}, 2);
  const TensorD out = std_attention(q, q, v, false);
  CHECK(max_abs_diff(out, v) == 0.0);
}

TEST_CASE("std_attention with zero queries averages V rows") {
  const std::int64_t s = 6, d = 4;
  const TensorD q({1, s, 1, d});
  const TensorD k = TensorD::random_uniform({1, s, 1, d}, 3);
  const TensorD v = TensorD::random_uniform({1, s, 1, d}, 4);
  const TensorD out = std_attention(q, k, v, false);
  for (std::int64_t i = 0; i < s; ++i)
    for (std::int64_t di = 0; di < d; ++di) {
      double mean = 0;
      for (std::int64_t j = 0; j < s; ++j) mean += v(0, j, 0, di);
      mean /= static_cast<double>(s);
      CHECK(std::abs(out(0, i, 0, di) - mean) <= 1e-14);
    }
}

TEST_CASE("std_attention matches the position-loop oracle") {
  const TensorD q = TensorD::random_uniform({1, 8, 2, 4}, 7);
  const TensorD k = TensorD::random_uniform({1, 8, 2, 4}, 8);
  const TensorD v = TensorD::random_uniform({1, 8, 2, 4}, 9);
  for (bool causal : {false, true})
    CHECK(max_abs_diff(std_attention(q, k, v, causal),
                       position_loop_attention(q, k, v, causal)) <= 1e-13);
  CHECK_THROWS_AS(std_attention(q, TensorD::random_uniform({1, 8, 2, 8}, 1), v, false),
                  ShapeError);
}

TEST_CASE("causal output ignores future K/V rows") {
  const std::int64_t s = 8;
  const TensorD q = TensorD::random_uniform({1, s, 2, 4}, 11);
  TensorD k = TensorD::random_uniform({1, s, 2, 4}, 12);
  TensorD v = TensorD::random_uniform({1, s, 2, 4}, 13);
  const TensorD base = std_attention(q, k, v, true);
  for (std::int64_t t = 0; t < s; ++t) {
    TensorD k2 = k, v2 = v;
    for (std::int64_t j = t + 1; j < s; ++j)
      for (std::int64_t ni = 0; ni < 2; ++ni)
        for (std::int64_t di = 0; di < 4; ++di) {
          k2(0, j, ni, di) += 3.5;
          v2(0, j, ni, di) -= 1.25;
        }
    const TensorD got = std_attention(q, k2, v2, true);
    for (std::int64_t ni = 0; ni < 2; ++ni)
      for (std::int64_t di = 0; di < 4; ++di)
        CHECK(got(0, t, ni, di) == base(0, t, ni, di));
  }
}

TEST_CASE("prefill_layer with zero weights is the double residual") {
  const std::int64_t b = 1, s = 4, h1 = 8, h2 = 12;
  const TensorD x = TensorD::random_uniform({b, s, h1}, 21);
  const auto w = LayerWeights<double>::zeros(h1, h2);
  KvCache<double> cache;
  const TensorD y = prefill_layer(x, w, cache, 2);
  CHECK(max_abs_diff(y, x) == 0.0);
  CHECK(cache.cached_len() == s);
  CHECK(cache.k.shape() == std::vector<std::int64_t>{b, s, h1});
  CHECK(cache.v.shape() == std::vector<std::int64_t>{b, s, h1});
}

TEST_CASE("prefill_layer matches an explicit composition") {
  const std::int64_t b = 1, s = 4, h1 = 8, h2 = 12, heads = 2;
  const TensorD x = TensorD::random_uniform({b, s, h1}, 31, -0.5, 0.5);
  const auto w = LayerWeights<double>::random(h1, h2, 100, 0.4);
  KvCache<double> cache;
  const TensorD got = prefill_layer(x, w, cache, heads);

  // Step-by-step composition from the primitive ops.
  const TensorD x2 = x.reshaped({s, h1});
  const TensorD xq = matmul(x2, w.w_q), xk = matmul(x2, w.w_k), xv = matmul(x2, w.w_v);
  const TensorD attn = std_attention(xq.reshaped({b, s, heads, h1 / heads}),
                                     xk.reshaped({b, s, heads, h1 / heads}),
                                     xv.reshaped({b, s, heads, h1 / heads}), true)
                           .reshaped({s, h1});
  const TensorD xo = add(matmul(attn, w.w_o), x2);
  TensorD hidden = matmul(xo, w.w_1);
  for (std::int64_t i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i]);
  const TensorD want = add(matmul(hidden, w.w_2), xo).reshaped({b, s, h1});
  CHECK(max_abs_diff(got, want) == 0.0);
  CHECK(bitwise_equal(cache.k, xk.reshaped({b, s, h1})));
}

TEST_CASE("decode_step appends exactly one cache row") {
  const std::int64_t b = 2, h1 = 8, h2 = 8, heads = 2;
  const auto w = LayerWeights<double>::random(h1, h2, 41, 0.3);
  KvCache<double> cache;
  const TensorD x = TensorD::random_uniform({b, 5, h1}, 42, -0.5, 0.5);
  prefill_layer(x, w, cache, heads);
  CHECK(cache.cached_len() == 5);
  const TensorD t = TensorD::random_uniform({b, 1, h1}, 43, -0.5, 0.5);
  decode_step(t, w, cache, heads);
  CHECK(cache.cached_len() == 6);
  CHECK_THROWS_AS(decode_step(TensorD::random_uniform({b, 1, h1 + 2}, 1), w, cache, heads),
                  ShapeError);
}

TEST_CASE("decode over two identical KV rows returns the V row plus residual") {
  const std::int64_t h1 = 4, heads = 1;
  auto w = LayerWeights<double>::zeros(h1, h1);
  w.w_k = TensorD::random_uniform({h1, h1}, 51, -0.5, 0.5);
  w.w_v = TensorD::random_uniform({h1, h1}, 52, -0.5, 0.5);
  w.w_q = TensorD::random_uniform({h1, h1}, 53, -0.5, 0.5);
  w.w_o = TensorD::identity(h1);  // expose the attention output directly

  const TensorD tok = TensorD::random_uniform({1, 1, h1}, 54, -0.5, 0.5);
  KvCache<double> cache;
  cache.store(matmul(tok.reshaped({1, h1}), w.w_k).reshaped({1, 1, h1}),
              matmul(tok.reshaped({1, h1}), w.w_v).reshaped({1, 1, h1}));

  const TensorD out = decode_step(tok, w, cache, heads);
  CHECK(cache.cached_len() == 2);
  // Both cached rows are identical, so attention weights are 1/2 and 1/2 and
  // the attention output equals the V row; W_O = I and zero MLP expose it.
  const TensorD v_row = matmul(tok.reshaped({1, h1}), w.w_v);
  for (std::int64_t i = 0; i < h1; ++i)
    CHECK(std::abs(out(0, 0, i) - (v_row(0, i) + tok(0, 0, i))) <= 1e-15);
}

TEST_CASE("incremental decode reproduces the causal prefill of the long sequence") {
  const std::int64_t b = 1, h1 = 8, h2 = 12, heads = 2, s = 6, extra = 3;
  const auto w = LayerWeights<double>::random(h1, h2, 61, 0.35);
  const TensorD full = TensorD::random_uniform({b, s + extra, h1}, 62, -0.5, 0.5);

  KvCache<double> cache;
  const TensorD prefix = block_view(full, {0, 0, 0}, {b, s, h1}).to_tensor();
  prefill_layer(prefix, w, cache, heads);
  TensorD last;
  for (std::int64_t step = 0; step < extra; ++step) {
    const TensorD tok = block_view(full, {0, s + step, 0}, {b, 1, h1}).to_tensor();
    last = decode_step(tok, w, cache, heads);
  }

  KvCache<double> cache2;
  const TensorD whole = prefill_layer(full, w, cache2, heads);
  for (std::int64_t i = 0; i < h1; ++i)
    CHECK(std::abs(last(0, 0, i) - whole(0, s + extra - 1, i)) <= 1e-12);
  CHECK(cache.cached_len() == cache2.cached_len());
}
