#ifndef HAQAE_DECODER_HPP
#define HAQAE_DECODER_HPP

// Autoregressive GRU decoder conditioned on latent value embeddings:
// hidden state initialized from the root embedding, per-step bilinear
// attention over the latents, combiner over [context; hidden], vocabulary
// projection, NLL computation and constrained generation.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "haqae/corpus.hpp"
#include "haqae/encoder.hpp"
#include "haqae/tensor.hpp"

namespace haqae {

template <class Real>
struct DecoderParams {
  GRUParams<Real> cell;           // input word_dim -> hidden
  BilinearAttnParams<Real> attn;  // query hidden, keys latent_dim
  Tensor<Real> comb_W, comb_b;    // (latent_dim + hidden, hidden), (1, hidden)
  Tensor<Real> out_W, out_b;      // (hidden, vocab), (1, vocab)
  Tensor<Real> init_W, init_b;    // (latent_dim, hidden), (1, hidden)

  std::size_t hidden_dim() const { return cell.hidden_dim(); }
  std::size_t vocab_size() const { return out_W.cols(); }

  static DecoderParams init(std::size_t word_dim, std::size_t hidden, std::size_t latent_dim,
                            std::size_t vocab, std::mt19937_64& rng) {
    const Real r = Real(0.1);
    DecoderParams p;
    p.cell = GRUParams<Real>::init(word_dim, hidden, rng);
    p.attn = BilinearAttnParams<Real>::init(hidden, latent_dim, rng);
    p.comb_W = Tensor<Real>::uniform({latent_dim + hidden, hidden}, -r, r, rng);
    p.comb_b = Tensor<Real>::param({1, hidden}, std::vector<Real>(hidden, Real(0)));
    p.out_W = Tensor<Real>::uniform({hidden, vocab}, -r, r, rng);
    p.out_b = Tensor<Real>::param({1, vocab}, std::vector<Real>(vocab, Real(0)));
    p.init_W = Tensor<Real>::uniform({latent_dim, hidden}, -r, r, rng);
    p.init_b = Tensor<Real>::param({1, hidden}, std::vector<Real>(hidden, Real(0)));
    return p;
  }
};

// h0 = tanh(W e + b); components in (-1, 1).
template <class Real>
Tensor<Real> init_hidden(const Tensor<Real>& root_embedding, const DecoderParams<Real>& p) {
  return tanh_op(add(matmul(root_embedding, p.init_W), p.init_b));
}

template <class Real>
struct DecodeStep {
  Tensor<Real> logits;  // (1, vocab)
  Tensor<Real> hidden;  // (1, hidden)
};

template <class Real>
DecodeStep<Real> decode_step(const Tensor<Real>& h, const Tensor<Real>& token_embedding,
                             const Tensor<Real>& latent_embeddings, const DecoderParams<Real>& p) {
  DecodeStep<Real> step;
  step.hidden = gru_step(token_embedding, h, p.cell);
  AttnResult<Real> att = bilinear_attention(step.hidden, latent_embeddings, p.attn);
  Tensor<Real> combined =
      tanh_op(add(matmul(concat_cols<Real>({att.context, step.hidden}), p.comb_W), p.comb_b));
  step.logits = add(matmul(combined, p.out_W), p.out_b);
  return step;
}

template <class Real>
struct NllResult {
  Tensor<Real> total;           // scalar: sum of -log p over all positions, EOS included
  std::vector<Real> per_token;  // raw per-position values; last entry is the EOS position
  // Per-word NLL with the EOS position excluded from numerator and denominator.
  Real per_word() const {
    Real s = 0;
    for (std::size_t i = 0; i + 1 < per_token.size(); ++i) s += per_token[i];
    return s / static_cast<Real>(per_token.size() - 1);
  }
  std::size_t word_count() const { return per_token.size() - 1; }
};

// Teacher-forced NLL of `ids` (flat tokens, no EOS) under the decoder.
// Inputs are [SOS] + ids; targets are ids + [EOS].
template <class Real>
NllResult<Real> sequence_nll(const DecoderParams<Real>& p, const Tensor<Real>& word_embeddings,
                             const std::vector<int>& ids, const Tensor<Real>& latent_embeddings,
                             Tensor<Real> h) {
  if (ids.empty()) throw std::invalid_argument("sequence_nll: empty sequence");
  std::vector<int> inputs;
  inputs.reserve(ids.size() + 1);
  inputs.push_back(Vocabulary::kSos);
  inputs.insert(inputs.end(), ids.begin(), ids.end());
  std::vector<int> targets(ids);
  targets.push_back(Vocabulary::kEos);

  Tensor<Real> embedded = embedding_lookup(word_embeddings, inputs);
  const std::size_t vocab = p.vocab_size();
  NllResult<Real> res;
  std::vector<Tensor<Real>> steps;
  steps.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    DecodeStep<Real> step = decode_step(h, slice_rows(embedded, t, 1), latent_embeddings, p);
    h = step.hidden;
    Tensor<Real> probs = softmax_rows(step.logits);
    std::vector<Real> onehot(vocab, Real(0));
    onehot[targets[t]] = Real(1);
    Tensor<Real> picked = sum_all(multiply(probs, Tensor<Real>::from({1, vocab}, std::move(onehot))));
    Tensor<Real> nll_t = scale(log_op(picked), Real(-1));
    res.per_token.push_back(nll_t.item());
    steps.push_back(std::move(nll_t));
  }
  res.total = sum_all(concat_cols(steps));
  return res;
}

// ---------------------------------------------------------------------------
// Constrained generation
// ---------------------------------------------------------------------------

struct GenerationConstraints {
  bool forbid_repeated_predicates = true;
  bool forbid_equal_subject_object = true;
  std::size_t max_events = 5;  // total, seed included
};

enum class GenMode { greedy, sample };

// Event slot cycle: 0=verb 1=subject 2=object 3=preposition 4=separator.
template <class Real>
std::size_t pick_token(const std::vector<Real>& logits, const std::vector<bool>& allowed,
                       GenMode mode, std::mt19937_64& rng) {
  bool any = false;
  Real mx = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed[i]) {
      mx = any ? std::max(mx, logits[i]) : logits[i];
      any = true;
    }
  if (!any) throw std::runtime_error("generate: all tokens masked (constraint saturation)");
  if (mode == GenMode::greedy) {
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (allowed[i] && logits[i] == mx) return i;
  }
  std::vector<double> probs(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed[i]) z += probs[i] = std::exp(static_cast<double>(logits[i] - mx));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double r = unif(rng) * z, acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  for (std::size_t i = logits.size(); i-- > 0;)
    if (allowed[i]) return i;
  throw std::logic_error("generate: unreachable");
}

// Autoregressive emission honoring the 4-slot event structure. The seed
// events are teacher-forced as context; generation continues from the
// following separator slot until EOS or max_events.
template <class Real>
EventSequence generate(const DecoderParams<Real>& p, const Tensor<Real>& word_embeddings,
                       const Vocabulary& vocab, const Tensor<Real>& latent_embeddings,
                       Tensor<Real> h, const std::vector<EventTuple>& seed_events,
                       const GenerationConstraints& constraints, GenMode mode,
                       std::uint64_t sample_seed = 0) {
  if (constraints.max_events < 1)
    throw std::invalid_argument("generate: max_events must be at least 1");
  std::mt19937_64 rng(sample_seed);
  const std::size_t V = vocab.size();

  EventSequence out;
  out.source_id = "generated";
  out.events = seed_events;

  std::set<int> used_verbs;
  for (const auto& e : seed_events) used_verbs.insert(vocab.encode(e.verb));

  // Teacher-force [SOS] + seed tokens; the next prediction sits at the
  // separator slot after the last seed event (or at the verb slot when the
  // seed is empty, as in latent-probe regeneration).
  std::vector<int> forced = {Vocabulary::kSos};
  if (!seed_events.empty()) {
    EventSequence seed_seq;
    seed_seq.events = seed_events;
    for (const auto& tok : tokenize_events(seed_seq)) forced.push_back(vocab.encode(tok));
  }
  Tensor<Real> logits;
  for (int id : forced) {
    DecodeStep<Real> step =
        decode_step(h, embedding_lookup(word_embeddings, {id}), latent_embeddings, p);
    h = step.hidden;
    logits = step.logits;
  }

  int slot = seed_events.empty() ? 0 : 4;  // separator slot follows the final preposition
  EventTuple cur;
  int cur_subject = -1;
  while (true) {
    std::vector<bool> allowed(V, false);
    if (slot == 4) {
      allowed[Vocabulary::kTup] = true;
      allowed[Vocabulary::kEos] = true;
      if (out.events.size() >= constraints.max_events) break;
    } else {
      for (std::size_t i = Vocabulary::kReserved; i < V; ++i) allowed[i] = true;
      if (slot == 3) allowed[Vocabulary::kNull] = true;
      if (slot == 0 && constraints.forbid_repeated_predicates)
        for (int v : used_verbs)
          if (v >= 0 && static_cast<std::size_t>(v) < V) allowed[v] = false;
      if (slot == 2 && constraints.forbid_equal_subject_object && cur_subject >= 0)
        allowed[cur_subject] = false;
    }
    const std::size_t chosen = pick_token(logits.values(), allowed, mode, rng);
    if (slot == 4 && static_cast<int>(chosen) == Vocabulary::kEos) break;
    switch (slot) {
      case 0: cur.verb = vocab.decode(chosen); used_verbs.insert(static_cast<int>(chosen)); break;
      case 1: cur.subject = vocab.decode(chosen); cur_subject = static_cast<int>(chosen); break;
      case 2: cur.object = vocab.decode(chosen); break;
      case 3:
        cur.preposition = vocab.decode(chosen);
        out.events.push_back(cur);
        cur = EventTuple{};
        cur_subject = -1;
        break;
      default: break;  // emitted "tup"
    }
    slot = (slot + 1) % 5;
    DecodeStep<Real> step = decode_step(h, embedding_lookup(word_embeddings, {static_cast<int>(chosen)}),
                                        latent_embeddings, p);
    h = step.hidden;
    logits = step.logits;
  }
  return out;
}

}  // namespace haqae

#endif  // HAQAE_DECODER_HPP
