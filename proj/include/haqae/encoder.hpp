#ifndef HAQAE_ENCODER_HPP
#define HAQAE_ENCODER_HPP

// Word embedding, single-layer bidirectional GRU encoder, and the bilinear
// attention shared by latent inference and decoding.
//
// GRU gates: z = sigma(Wz x + Uz h + bz), r = sigma(Wr x + Ur h + br),
// htil = tanh(Wh x + Uh (r.h) + bh), h' = (1-z).h + z.htil.

#include <vector>

#include "haqae/tensor.hpp"

namespace haqae {

template <class Real>
struct GRUParams {
  Tensor<Real> Wz, Uz, bz;
  Tensor<Real> Wr, Ur, br;
  Tensor<Real> Wh, Uh, bh;

  std::size_t input_dim() const { return Wz.rows(); }
  std::size_t hidden_dim() const { return Wz.cols(); }

  static GRUParams init(std::size_t in_dim, std::size_t hid, std::mt19937_64& rng, Real r = Real(0.1)) {
    GRUParams p;
    p.Wz = Tensor<Real>::uniform({in_dim, hid}, -r, r, rng);
    p.Uz = Tensor<Real>::uniform({hid, hid}, -r, r, rng);
    p.bz = Tensor<Real>::param({1, hid}, std::vector<Real>(hid, Real(0)));
    p.Wr = Tensor<Real>::uniform({in_dim, hid}, -r, r, rng);
    p.Ur = Tensor<Real>::uniform({hid, hid}, -r, r, rng);
    p.br = Tensor<Real>::param({1, hid}, std::vector<Real>(hid, Real(0)));
    p.Wh = Tensor<Real>::uniform({in_dim, hid}, -r, r, rng);
    p.Uh = Tensor<Real>::uniform({hid, hid}, -r, r, rng);
    p.bh = Tensor<Real>::param({1, hid}, std::vector<Real>(hid, Real(0)));
    return p;
  }

  std::vector<std::pair<std::string, Tensor<Real>>> named(const std::string& prefix) const {
    return {{prefix + ".Wz", Wz}, {prefix + ".Uz", Uz}, {prefix + ".bz", bz},
            {prefix + ".Wr", Wr}, {prefix + ".Ur", Ur}, {prefix + ".br", br},
            {prefix + ".Wh", Wh}, {prefix + ".Uh", Uh}, {prefix + ".bh", bh}};
  }
};

template <class Real>
Tensor<Real> gru_step(const Tensor<Real>& x, const Tensor<Real>& h_prev, const GRUParams<Real>& p) {
  if (x.cols() != p.input_dim() || h_prev.cols() != p.hidden_dim())
    throw std::invalid_argument("gru_step: input " + shape_str(x.shape()) + " / hidden " +
                                shape_str(h_prev.shape()) + " do not match params (" +
                                std::to_string(p.input_dim()) + "," + std::to_string(p.hidden_dim()) + ")");
  Tensor<Real> z = sigmoid(add(add(matmul(x, p.Wz), matmul(h_prev, p.Uz)), p.bz));
  Tensor<Real> r = sigmoid(add(add(matmul(x, p.Wr), matmul(h_prev, p.Ur)), p.br));
  Tensor<Real> htil =
      tanh_op(add(add(matmul(x, p.Wh), matmul(multiply(r, h_prev), p.Uh)), p.bh));
  // (1-z).h + z.htil == h + z.(htil - h)
  Tensor<Real> diff = add(htil, scale(h_prev, Real(-1)));
  return add(h_prev, multiply(z, diff));
}

template <class Real>
struct EncoderOutput {
  Tensor<Real> states;      // (n, 2H) forward/backward concatenation
  Tensor<Real> mean_state;  // (1, 2H)
};

// Bidirectional single-layer GRU over pre-embedded inputs (n, word_dim).
template <class Real>
EncoderOutput<Real> encode_sequence(const Tensor<Real>& embedded, const GRUParams<Real>& fwd,
                                    const GRUParams<Real>& bwd) {
  const std::size_t n = embedded.rows();
  if (n == 0) throw std::invalid_argument("encode_sequence: empty input");
  const std::size_t hid = fwd.hidden_dim();
  std::vector<Tensor<Real>> fstates(n), bstates(n);
  Tensor<Real> h = Tensor<Real>::zeros({1, hid});
  for (std::size_t t = 0; t < n; ++t) {
    h = gru_step(slice_rows(embedded, t, 1), h, fwd);
    fstates[t] = h;
  }
  h = Tensor<Real>::zeros({1, bwd.hidden_dim()});
  for (std::size_t t = n; t-- > 0;) {
    h = gru_step(slice_rows(embedded, t, 1), h, bwd);
    bstates[t] = h;
  }
  std::vector<Tensor<Real>> rows;
  rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) rows.push_back(concat_cols<Real>({fstates[t], bstates[t]}));
  EncoderOutput<Real> out;
  out.states = concat_rows(rows);
  out.mean_state = mean_rows(out.states);
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear (Luong-style) attention: score_j = q^T W k_j.
// ---------------------------------------------------------------------------

template <class Real>
struct BilinearAttnParams {
  Tensor<Real> W;  // (query_dim, key_dim)

  static BilinearAttnParams init(std::size_t qd, std::size_t kd, std::mt19937_64& rng,
                                 Real r = Real(0.1)) {
    return {Tensor<Real>::uniform({qd, kd}, -r, r, rng)};
  }
};

template <class Real>
struct AttnResult {
  Tensor<Real> context;  // (1, key_dim)
  Tensor<Real> weights;  // (1, n)
};

template <class Real>
AttnResult<Real> bilinear_attention(const Tensor<Real>& query, const Tensor<Real>& keys,
                                    const BilinearAttnParams<Real>& p) {
  if (keys.rows() == 0) throw std::invalid_argument("bilinear_attention: empty key set");
  if (query.cols() != p.W.rows() || keys.cols() != p.W.cols())
    throw std::invalid_argument("bilinear_attention: query " + shape_str(query.shape()) +
                                " / keys " + shape_str(keys.shape()) + " do not match W " +
                                shape_str(p.W.shape()));
  Tensor<Real> qw = matmul(query, p.W);                 // (1, kd)
  Tensor<Real> scores = matmul(qw, keys, /*transpose_b=*/true);  // (1, n)
  AttnResult<Real> res;
  res.weights = softmax_rows(scores);
  res.context = matmul(res.weights, keys);  // (1, kd)
  return res;
}

}  // namespace haqae

#endif  // HAQAE_ENCODER_HPP
