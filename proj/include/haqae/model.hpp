#ifndef HAQAE_MODEL_HPP
#define HAQAE_MODEL_HPP

// Model variants and per-sequence loss assembly.
//   haqae      : bidirectional GRU encoder -> linear latent chain -> attending decoder
//   nohier     : same, but all latents query from the mean encoder state
//   rnnlm      : 2-layer GRU language model
//   rnnlm_role : rnnlm plus a learned role-marker embedding per input token

#include <fstream>
#include <optional>
#include <sstream>

#include "haqae/config.hpp"
#include "haqae/corpus.hpp"
#include "haqae/decoder.hpp"
#include "haqae/encoder.hpp"
#include "haqae/vq.hpp"

namespace haqae {

inline constexpr std::size_t kNumRoles = 5;  // verb subject object preposition separator

// Role marker of a flat-token position (SOS and EOS map to separator).
inline std::size_t role_of_position(std::size_t flat_pos) { return flat_pos % 5; }

template <class Real>
struct Model {
  HAQAEConfig cfg;
  Vocabulary vocab;

  // Latent-variable variants
  Tensor<Real> enc_emb;
  GRUParams<Real> enc_fwd, enc_bwd;
  LatentChain<Real> chain;
  Tensor<Real> dec_emb;
  DecoderParams<Real> dec;

  // Language-model variants
  GRUParams<Real> lm1, lm2;
  Tensor<Real> lm_out_W, lm_out_b;
  Tensor<Real> role_emb;

  bool has_latents() const {
    return cfg.variant == Variant::haqae || cfg.variant == Variant::nohier;
  }

  std::vector<std::pair<std::string, Tensor<Real>>> named_params() const {
    std::vector<std::pair<std::string, Tensor<Real>>> out;
    auto push = [&out](std::vector<std::pair<std::string, Tensor<Real>>> v) {
      for (auto& p : v) out.push_back(std::move(p));
    };
    if (has_latents()) {
      out.emplace_back("enc_emb", enc_emb);
      push(enc_fwd.named("enc_fwd"));
      push(enc_bwd.named("enc_bwd"));
      for (std::size_t i = 0; i < chain.M(); ++i) {
        const auto& lp = chain.latents[i];
        const std::string pre = "latent" + std::to_string(i);
        out.emplace_back(pre + ".attn_W", lp.attn.W);
        out.emplace_back(pre + ".proj_W", lp.proj_W);
        out.emplace_back(pre + ".proj_b", lp.proj_b);
        out.emplace_back(pre + ".codebook", lp.codebook.embeddings);
      }
      if (!cfg.tie_embeddings) out.emplace_back("dec_emb", dec_emb);
      push(dec.cell.named("dec_cell"));
      out.emplace_back("dec.attn_W", dec.attn.W);
      out.emplace_back("dec.comb_W", dec.comb_W);
      out.emplace_back("dec.comb_b", dec.comb_b);
      out.emplace_back("dec.out_W", dec.out_W);
      out.emplace_back("dec.out_b", dec.out_b);
      out.emplace_back("dec.init_W", dec.init_W);
      out.emplace_back("dec.init_b", dec.init_b);
    } else {
      out.emplace_back("dec_emb", dec_emb);
      push(lm1.named("lm1"));
      push(lm2.named("lm2"));
      out.emplace_back("lm.out_W", lm_out_W);
      out.emplace_back("lm.out_b", lm_out_b);
      if (cfg.variant == Variant::rnnlm_role) out.emplace_back("role_emb", role_emb);
    }
    return out;
  }

  std::vector<std::pair<std::string, Tensor<Real>>> codebook_params() const {
    std::vector<std::pair<std::string, Tensor<Real>>> out;
    if (has_latents())
      for (std::size_t i = 0; i < chain.M(); ++i)
        out.emplace_back("latent" + std::to_string(i) + ".codebook", chain.latents[i].codebook.embeddings);
    return out;
  }
};

// Optional pretrained-vector import: whitespace-separated "token v1..vD" lines.
template <class Real>
std::size_t import_embeddings(Tensor<Real>& table, const Vocabulary& vocab, const std::string& path,
                              std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_embeddings: cannot open " + path);
  std::string line;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (!vocab.contains(tok)) continue;
    const int id = vocab.encode(tok);
    std::vector<Real> vec(dim);
    for (std::size_t j = 0; j < dim; ++j)
      if (!(ls >> vec[j]))
        throw std::runtime_error("import_embeddings: token '" + tok + "' has fewer than " +
                                 std::to_string(dim) + " values");
    std::copy(vec.begin(), vec.end(), table.values().begin() + id * dim);
    ++loaded;
  }
  return loaded;
}

template <class Real>
Model<Real> build_variant(const HAQAEConfig& cfg, const Vocabulary& vocab) {
  cfg.validate();
  Model<Real> m;
  m.cfg = cfg;
  m.vocab = vocab;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t V = vocab.size();
  const Real r = Real(0.1);
  if (m.has_latents()) {
    m.enc_emb = Tensor<Real>::uniform({V, cfg.word_dim}, -r, r, rng);
    m.enc_fwd = GRUParams<Real>::init(cfg.word_dim, cfg.enc_hidden, rng);
    m.enc_bwd = GRUParams<Real>::init(cfg.word_dim, cfg.enc_hidden, rng);
    m.chain = LatentChain<Real>::init(cfg.M, cfg.K, cfg.latent_dim, 2 * cfg.enc_hidden, rng,
                                      cfg.variant == Variant::nohier);
    m.dec_emb = cfg.tie_embeddings ? m.enc_emb
                                   : Tensor<Real>::uniform({V, cfg.word_dim}, -r, r, rng);
    m.dec = DecoderParams<Real>::init(cfg.word_dim, cfg.dec_hidden, cfg.latent_dim, V, rng);
    if (!cfg.embedding_file.empty()) {
      import_embeddings(m.enc_emb, vocab, cfg.embedding_file, cfg.word_dim);
      if (!cfg.tie_embeddings) import_embeddings(m.dec_emb, vocab, cfg.embedding_file, cfg.word_dim);
    }
  } else {
    m.dec_emb = Tensor<Real>::uniform({V, cfg.word_dim}, -r, r, rng);
    const std::size_t in_dim =
        cfg.variant == Variant::rnnlm_role ? cfg.word_dim + cfg.role_dim : cfg.word_dim;
    m.lm1 = GRUParams<Real>::init(in_dim, cfg.dec_hidden, rng);
    m.lm2 = GRUParams<Real>::init(cfg.dec_hidden, cfg.dec_hidden, rng);
    m.lm_out_W = Tensor<Real>::uniform({cfg.dec_hidden, V}, -r, r, rng);
    m.lm_out_b = Tensor<Real>::param({1, V}, std::vector<Real>(V, Real(0)));
    if (cfg.variant == Variant::rnnlm_role)
      m.role_emb = Tensor<Real>::uniform({kNumRoles, cfg.role_dim}, -r, r, rng);
    if (!cfg.embedding_file.empty()) import_embeddings(m.dec_emb, vocab, cfg.embedding_file, cfg.word_dim);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Per-sequence forward
// ---------------------------------------------------------------------------

template <class Real>
struct SequenceForward {
  NllResult<Real> nll;
  std::optional<Tensor<Real>> recon;   // latent variants only
  std::optional<Tensor<Real>> commit;  // beta-weighted
  std::vector<std::size_t> indices;    // chosen code per latent
};

namespace detail {

template <class Real>
Tensor<Real> dropout_mask(Shape shape, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const Real inv = Real(1.0 / (1.0 - p));
  Tensor<Real> mask = Tensor<Real>::zeros(std::move(shape));
  for (auto& v : mask.values()) v = keep(rng) ? inv : Real(0);
  return mask;
}

}  // namespace detail

// Teacher-forced NLL of a 2-layer GRU language model (dropout on the input
// embeddings and the pre-projection hidden when rng != nullptr).
template <class Real>
NllResult<Real> lm_sequence_nll(const Model<Real>& m, const std::vector<int>& ids,
                                std::mt19937_64* dropout_rng = nullptr) {
  if (ids.empty()) throw std::invalid_argument("lm_sequence_nll: empty sequence");
  std::vector<int> inputs = {Vocabulary::kSos};
  inputs.insert(inputs.end(), ids.begin(), ids.end());
  std::vector<int> targets(ids);
  targets.push_back(Vocabulary::kEos);

  Tensor<Real> embedded = embedding_lookup(m.dec_emb, inputs);
  if (m.cfg.variant == Variant::rnnlm_role) {
    std::vector<int> roles;
    roles.reserve(inputs.size());
    roles.push_back(4);  // SOS enters as a separator-role input
    for (std::size_t i = 0; i + 1 < inputs.size(); ++i)
      roles.push_back(static_cast<int>(role_of_position(i)));
    embedded = concat_cols<Real>({embedded, embedding_lookup(m.role_emb, roles)});
  }
  const bool train = dropout_rng != nullptr && m.cfg.dropout > 0;
  if (train) embedded = multiply(embedded, detail::dropout_mask<Real>(embedded.shape(), m.cfg.dropout, *dropout_rng));

  const std::size_t V = m.vocab.size();
  Tensor<Real> h1 = Tensor<Real>::zeros({1, m.lm1.hidden_dim()});
  Tensor<Real> h2 = Tensor<Real>::zeros({1, m.lm2.hidden_dim()});
  NllResult<Real> res;
  std::vector<Tensor<Real>> steps;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    h1 = gru_step(slice_rows(embedded, t, 1), h1, m.lm1);
    h2 = gru_step(h1, h2, m.lm2);
    Tensor<Real> out = h2;
    if (train) out = multiply(out, detail::dropout_mask<Real>(out.shape(), m.cfg.dropout, *dropout_rng));
    Tensor<Real> logits = add(matmul(out, m.lm_out_W), m.lm_out_b);
    Tensor<Real> probs = softmax_rows(logits);
    std::vector<Real> onehot(V, Real(0));
    onehot[targets[t]] = Real(1);
    Tensor<Real> picked = sum_all(multiply(probs, Tensor<Real>::from({1, V}, std::move(onehot))));
    Tensor<Real> nll_t = scale(log_op(picked), Real(-1));
    res.per_token.push_back(nll_t.item());
    steps.push_back(std::move(nll_t));
  }
  res.total = sum_all(concat_cols(steps));
  return res;
}

// Encode + infer the latent assignment for a token sequence.
template <class Real>
ChainAssignment<Real> infer_for_ids(const Model<Real>& m, const std::vector<int>& ids) {
  EncoderOutput<Real> enc = encode_sequence(embedding_lookup(m.enc_emb, ids), m.enc_fwd, m.enc_bwd);
  return m.cfg.variant == Variant::nohier ? infer_independent(enc, m.chain)
                                          : infer_chain(enc, m.chain);
}

template <class Real>
Tensor<Real> decoder_init_state(const Model<Real>& m, const ChainAssignment<Real>& assignment) {
  const std::size_t root =
      m.cfg.variant == Variant::nohier ? m.cfg.nohier_init_latent : std::size_t{0};
  return init_hidden(assignment.latents[root].st, m.dec);
}

template <class Real>
SequenceForward<Real> sequence_forward(const Model<Real>& m, const std::vector<int>& ids,
                                       std::mt19937_64* dropout_rng = nullptr) {
  SequenceForward<Real> fwd;
  if (!m.has_latents()) {
    fwd.nll = lm_sequence_nll(m, ids, dropout_rng);
    return fwd;
  }
  ChainAssignment<Real> assignment = infer_for_ids(m, ids);
  for (const auto& l : assignment.latents) fwd.indices.push_back(l.index);
  Tensor<Real> z_e = assignment.embeddings();
  Tensor<Real> h0 = decoder_init_state(m, assignment);
  fwd.nll = sequence_nll(m.dec, m.dec_emb, ids, z_e, h0);
  fwd.recon = reconstruct_loss(assignment);
  fwd.commit = commit_loss(assignment, Real(m.cfg.beta));
  return fwd;
}

// Flat token ids of a sequence under the model's vocabulary (no EOS).
template <class Real>
std::vector<int> encode_ids(const Model<Real>& m, const EventSequence& seq) {
  std::vector<int> ids;
  for (const auto& tok : tokenize_events(seq)) ids.push_back(m.vocab.encode(tok));
  return ids;
}

}  // namespace haqae

#endif  // HAQAE_MODEL_HPP
