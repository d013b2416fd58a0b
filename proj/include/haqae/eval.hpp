#ifndef HAQAE_EVAL_HPP
#define HAQAE_EVAL_HPP

// Measurement suite: per-word NLL/perplexity (EOS excluded), inverse
// narrative cloze construction and scoring, latent probes.
//
// For latent-variable variants the sequence "probability" is the
// reconstruction log-likelihood under the deterministically inferred chain;
// the uniform-prior latent term is constant and omitted.

#include <algorithm>
#include <cmath>
#include <random>

#include "haqae/grammar.hpp"
#include "haqae/model.hpp"

namespace haqae {

struct PerplexityResult {
  double nll = 0.0;
  double ppl = 0.0;
};

// Token-weighted mean per-word NLL across the corpus, EOS excluded.
template <class Real>
PerplexityResult perplexity_eval(const Model<Real>& model, const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("perplexity_eval: empty corpus");
  double total = 0.0;
  std::size_t words = 0;
  for (const auto& seq : corpus) {
    SequenceForward<Real> fwd = sequence_forward(model, encode_ids(model, seq));
    for (std::size_t i = 0; i + 1 < fwd.nll.per_token.size(); ++i) total += fwd.nll.per_token[i];
    words += fwd.nll.word_count();
  }
  PerplexityResult res;
  res.nll = total / static_cast<double>(words);
  res.ppl = std::exp(res.nll);
  return res;
}

// EOS-excluded sequence log-probability used for cloze ranking.
template <class Real>
double sequence_logprob(const Model<Real>& model, const EventSequence& seq) {
  SequenceForward<Real> fwd = sequence_forward(model, encode_ids(model, seq));
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < fwd.nll.per_token.size(); ++i) s += fwd.nll.per_token[i];
  return -s;
}

// ---------------------------------------------------------------------------
// Inverse narrative cloze
// ---------------------------------------------------------------------------

struct ClozeInstance {
  EventTuple seed_event;
  EventSequence legit;                   // exactly 6 events
  std::vector<EventSequence> detractors; // 5, each seed + a 5-event span from another document
};

inline constexpr std::size_t kClozeEvents = 6;
inline constexpr std::size_t kClozeDetractors = 5;

// Legit sources are sampled without replacement; detractor tails are
// contiguous 5-event spans from other documents.
inline std::vector<ClozeInstance> build_cloze_set(const Corpus& corpus, std::size_t n_sets,
                                                  std::uint64_t seed) {
  std::vector<std::size_t> legit_docs, tail_docs;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].events.size() >= kClozeEvents) legit_docs.push_back(i);
    if (corpus[i].events.size() >= kClozeEvents - 1) tail_docs.push_back(i);
  }
  if (legit_docs.size() < n_sets || tail_docs.size() < 2)
    throw std::runtime_error("build_cloze_set: need at least " + std::to_string(n_sets) +
                             " documents with >= 6 events (and one other tail source), found " +
                             std::to_string(legit_docs.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(legit_docs.begin(), legit_docs.end(), rng);

  std::vector<ClozeInstance> out;
  out.reserve(n_sets);
  for (std::size_t s = 0; s < n_sets; ++s) {
    const std::size_t li = legit_docs[s];
    ClozeInstance inst;
    inst.legit.source_id = corpus[li].source_id;
    inst.legit.events.assign(corpus[li].events.begin(), corpus[li].events.begin() + kClozeEvents);
    inst.seed_event = inst.legit.events.front();
    while (inst.detractors.size() < kClozeDetractors) {
      std::uniform_int_distribution<std::size_t> pick(0, tail_docs.size() - 1);
      const std::size_t di = tail_docs[pick(rng)];
      if (di == li) continue;
      const std::size_t span = kClozeEvents - 1;
      std::uniform_int_distribution<std::size_t> start(0, corpus[di].events.size() - span);
      const std::size_t s0 = start(rng);
      EventSequence det;
      det.source_id = inst.legit.source_id + ".det" + std::to_string(inst.detractors.size());
      det.events.push_back(inst.seed_event);
      det.events.insert(det.events.end(), corpus[di].events.begin() + s0,
                        corpus[di].events.begin() + s0 + span);
      inst.detractors.push_back(std::move(det));
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// Fraction of instances whose legit candidate is ranked strictly first.
// Ties count as incorrect.
template <class Scorer>
double cloze_accuracy_with(const std::vector<ClozeInstance>& instances, Scorer score) {
  if (instances.empty()) throw std::invalid_argument("cloze_accuracy: no instances");
  std::size_t correct = 0;
  for (const auto& inst : instances) {
    const double legit_score = score(inst.legit);
    bool strictly_first = true;
    for (const auto& det : inst.detractors)
      if (score(det) >= legit_score) {
        strictly_first = false;
        break;
      }
    if (strictly_first) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

template <class Real>
double cloze_accuracy(const Model<Real>& model, const std::vector<ClozeInstance>& instances) {
  return cloze_accuracy_with(instances,
                             [&](const EventSequence& s) { return sequence_logprob(model, s); });
}

// Uniform random scorer baseline.
inline double cloze_accuracy_random(const std::vector<ClozeInstance>& instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return cloze_accuracy_with(instances, [&](const EventSequence&) { return unif(rng); });
}

// ---------------------------------------------------------------------------
// Latent probes
// ---------------------------------------------------------------------------

enum class ProbeMode { frozen, recompute };

struct ProbeReport {
  std::vector<std::size_t> base_indices;
  std::vector<std::size_t> probed_indices;
  std::size_t latent_index = 0;
  std::size_t new_value = 0;
  EventSequence base_regen;
  EventSequence probed_regen;
  std::size_t edit_distance = 0;
};

inline std::size_t token_edit_distance(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

// Greedy regeneration from a fixed set of latent embedding rows.
template <class Real>
EventSequence regenerate(const Model<Real>& m, const std::vector<Tensor<Real>>& rows,
                         std::size_t max_events) {
  Tensor<Real> z_e = concat_rows(rows);
  const std::size_t root =
      m.cfg.variant == Variant::nohier ? m.cfg.nohier_init_latent : std::size_t{0};
  Tensor<Real> h0 = init_hidden(rows[root], m.dec);
  GenerationConstraints c;
  c.forbid_repeated_predicates = false;
  c.forbid_equal_subject_object = false;
  c.max_events = max_events;
  return generate(m.dec, m.dec_emb, m.vocab, z_e, h0, std::vector<EventTuple>{}, c,
                  GenMode::greedy);
}

}  // namespace detail

// Overrides one latent's chosen value and greedily regenerates. Default mode
// keeps the other latents' values fixed; recompute mode re-runs attention and
// quantization for the descendants of the overridden latent.
template <class Real>
ProbeReport latent_probe(const Model<Real>& m, const EventSequence& seq, std::size_t latent_index,
                         std::size_t new_value, ProbeMode mode = ProbeMode::frozen) {
  if (latent_index >= m.cfg.M)
    throw std::invalid_argument("latent_probe: latent index " + std::to_string(latent_index) +
                                " out of range (M=" + std::to_string(m.cfg.M) + ")");
  if (new_value >= m.cfg.K)
    throw std::invalid_argument("latent_probe: value " + std::to_string(new_value) +
                                " out of range (K=" + std::to_string(m.cfg.K) + ")");
  const std::vector<int> ids = encode_ids(m, seq);
  EncoderOutput<Real> enc = encode_sequence(embedding_lookup(m.enc_emb, ids), m.enc_fwd, m.enc_bwd);
  ChainAssignment<Real> base = m.cfg.variant == Variant::nohier ? infer_independent(enc, m.chain)
                                                                : infer_chain(enc, m.chain);
  ProbeReport rep;
  rep.latent_index = latent_index;
  rep.new_value = new_value;
  for (const auto& l : base.latents) rep.base_indices.push_back(l.index);

  std::vector<Tensor<Real>> base_rows, probed_rows;
  for (const auto& l : base.latents) base_rows.push_back(l.chosen);
  rep.probed_indices = rep.base_indices;
  rep.probed_indices[latent_index] = new_value;
  probed_rows = base_rows;
  probed_rows[latent_index] =
      embedding_lookup(m.chain.latents[latent_index].codebook.embeddings,
                       {static_cast<int>(new_value)});
  if (mode == ProbeMode::recompute && m.cfg.variant != Variant::nohier) {
    for (std::size_t i = latent_index + 1; i < m.cfg.M; ++i) {
      LatentAssignment<Real> a = infer_latent(probed_rows[i - 1], enc, m.chain.latents[i]);
      rep.probed_indices[i] = a.index;
      probed_rows[i] = a.chosen;
    }
  }

  const std::size_t max_events = seq.events.size() + 2;
  rep.base_regen = detail::regenerate(m, base_rows, max_events);
  rep.probed_regen = detail::regenerate(m, probed_rows, max_events);
  const auto base_toks =
      rep.base_regen.events.empty() ? std::vector<std::string>{} : tokenize_events(rep.base_regen);
  const auto probed_toks = rep.probed_regen.events.empty() ? std::vector<std::string>{}
                                                           : tokenize_events(rep.probed_regen);
  rep.edit_distance = token_edit_distance(base_toks, probed_toks);
  return rep;
}

}  // namespace haqae

#endif  // HAQAE_EVAL_HPP
