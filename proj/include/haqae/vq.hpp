#ifndef HAQAE_VQ_HPP
#define HAQAE_VQ_HPP

// The M-variable quantized latent chain: per-latent codebooks, attention
// derived queries, deterministic argmin posterior, reconstruct/commit losses
// and the straight-through pass to the decoder.
//
// Each latent owns a bilinear attention over the encoder states and an
// affine map taking the attention context (2H) down to the codebook
// dimension D. The root's attention query is the averaged encoder state; a
// child's query is its parent's straight-through embedding, so commit-loss
// gradients propagate up the chain into the encoder.

#include <cstddef>
#include <limits>
#include <vector>

#include "haqae/encoder.hpp"
#include "haqae/tensor.hpp"

namespace haqae {

template <class Real>
struct Codebook {
  Tensor<Real> embeddings;  // (K, D)

  std::size_t K() const { return embeddings.rows(); }
  std::size_t D() const { return embeddings.cols(); }

  // uniform(-1/K, 1/K)
  static Codebook init(std::size_t K, std::size_t D, std::mt19937_64& rng) {
    const Real r = Real(1) / static_cast<Real>(K);
    return {Tensor<Real>::uniform({K, D}, -r, r, rng)};
  }
};

// Argmin-L2 row of the codebook; ties broken by lowest index. The scan runs
// on raw values and carries no gradient; gradients reach the chosen row only
// through the embedding_lookup the caller performs.
template <class Real>
std::size_t quantize_index(const Tensor<Real>& query, const Codebook<Real>& cb) {
  if (query.cols() != cb.D() || query.rows() != 1)
    throw std::invalid_argument("quantize: query " + shape_str(query.shape()) +
                                " does not match codebook " + shape_str(cb.embeddings.shape()));
  const Real* q = query.values().data();
  const Real* e = cb.embeddings.values().data();
  std::size_t best = 0;
  Real best_d = std::numeric_limits<Real>::max();
  for (std::size_t k = 0; k < cb.K(); ++k) {
    Real d = 0;
    for (std::size_t j = 0; j < cb.D(); ++j) {
      const Real diff = q[j] - e[k * cb.D() + j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

template <class Real>
std::pair<std::size_t, Tensor<Real>> quantize(const Tensor<Real>& query, const Codebook<Real>& cb) {
  const std::size_t k = quantize_index(query, cb);
  return {k, embedding_lookup(cb.embeddings, {static_cast<int>(k)})};
}

// Forward value e*, backward gradient copied verbatim to the query:
// out = q + sg(e* - q).
template <class Real>
Tensor<Real> straight_through(const Tensor<Real>& query, const Tensor<Real>& chosen) {
  return add(query, stop_gradient(add(chosen, scale(query, Real(-1)))));
}

template <class Real>
struct LatentParams {
  BilinearAttnParams<Real> attn;  // query over encoder states
  Tensor<Real> proj_W;            // (2H, D) context -> codebook space
  Tensor<Real> proj_b;            // (1, D)
  Codebook<Real> codebook;
};

template <class Real>
struct LatentChain {
  std::vector<LatentParams<Real>> latents;  // parent -> child order (linear chain)

  std::size_t M() const { return latents.size(); }

  // query_dim: 2H for the root (mean encoder state), D for children (parent
  // embedding). With independent=true every latent queries with the mean
  // encoder state, so all query dims are 2H.
  static LatentChain init(std::size_t M, std::size_t K, std::size_t D, std::size_t enc_dim,
                          std::mt19937_64& rng, bool independent = false) {
    LatentChain chain;
    for (std::size_t i = 0; i < M; ++i) {
      LatentParams<Real> lp;
      const std::size_t qd = (i == 0 || independent) ? enc_dim : D;
      lp.attn = BilinearAttnParams<Real>::init(qd, enc_dim, rng);
      lp.proj_W = Tensor<Real>::uniform({enc_dim, D}, Real(-0.1), Real(0.1), rng);
      lp.proj_b = Tensor<Real>::param({1, D}, std::vector<Real>(D, Real(0)));
      lp.codebook = Codebook<Real>::init(K, D, rng);
      chain.latents.push_back(std::move(lp));
    }
    return chain;
  }
};

template <class Real>
struct LatentAssignment {
  Tensor<Real> query;     // (1, D) projected attention context
  std::size_t index = 0;  // chosen codebook row
  Tensor<Real> chosen;    // (1, D) embedding_lookup of the row
  Tensor<Real> st;        // (1, D) straight-through output
  Tensor<Real> weights;   // attention weights over encoder states
};

template <class Real>
struct ChainAssignment {
  std::vector<LatentAssignment<Real>> latents;

  std::size_t M() const { return latents.size(); }

  // (M, D) decoder-side embeddings.
  Tensor<Real> embeddings() const {
    std::vector<Tensor<Real>> rows;
    rows.reserve(latents.size());
    for (const auto& l : latents) rows.push_back(l.st);
    return concat_rows(rows);
  }
};

template <class Real>
LatentAssignment<Real> infer_latent(const Tensor<Real>& attn_query, const EncoderOutput<Real>& enc,
                                    const LatentParams<Real>& lp) {
  LatentAssignment<Real> a;
  AttnResult<Real> att = bilinear_attention(attn_query, enc.states, lp.attn);
  a.weights = att.weights;
  a.query = add(matmul(att.context, lp.proj_W), lp.proj_b);
  auto [idx, chosen] = quantize(a.query, lp.codebook);
  a.index = idx;
  a.chosen = chosen;
  a.st = straight_through(a.query, a.chosen);
  return a;
}

// Deterministic parent -> child inference; the root queries with the mean
// encoder state, each child with its parent's straight-through embedding.
template <class Real>
ChainAssignment<Real> infer_chain(const EncoderOutput<Real>& enc, const LatentChain<Real>& chain) {
  ChainAssignment<Real> out;
  for (std::size_t i = 0; i < chain.M(); ++i) {
    const Tensor<Real>& q = (i == 0) ? enc.mean_state : out.latents.back().st;
    out.latents.push_back(infer_latent(q, enc, chain.latents[i]));
  }
  return out;
}

// Independent latents: every query is the mean encoder state (NOHIER).
template <class Real>
ChainAssignment<Real> infer_independent(const EncoderOutput<Real>& enc,
                                        const LatentChain<Real>& chain) {
  ChainAssignment<Real> out;
  for (std::size_t i = 0; i < chain.M(); ++i)
    out.latents.push_back(infer_latent(enc.mean_state, enc, chain.latents[i]));
  return out;
}

// (1/M) sum_j ||sg(q_j) - e*_j||^2 ; gradient flows only into codebook rows.
template <class Real>
Tensor<Real> reconstruct_loss(const ChainAssignment<Real>& assignment) {
  Tensor<Real> total = Tensor<Real>::scalar(Real(0));
  for (const auto& l : assignment.latents)
    total = add(total, squared_l2_distance(stop_gradient(l.query), l.chosen));
  return scale(total, Real(1) / static_cast<Real>(assignment.M()));
}

// (beta/M) sum_j ||q_j - sg(e*_j)||^2 ; gradient flows only into queries.
template <class Real>
Tensor<Real> commit_loss(const ChainAssignment<Real>& assignment, Real beta = Real(0.25)) {
  if (!(beta > Real(0))) throw std::invalid_argument("commit_loss: beta must be positive");
  Tensor<Real> total = Tensor<Real>::scalar(Real(0));
  for (const auto& l : assignment.latents)
    total = add(total, squared_l2_distance(l.query, stop_gradient(l.chosen)));
  return scale(total, beta / static_cast<Real>(assignment.M()));
}

}  // namespace haqae

#endif  // HAQAE_VQ_HPP
