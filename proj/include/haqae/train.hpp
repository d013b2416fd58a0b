#ifndef HAQAE_TRAIN_HPP
#define HAQAE_TRAIN_HPP

// Objective assembly, Adam with global-norm gradient clipping, and the
// training loop shared by all variants. Metric log lines are
//   step,split,nll,ppl,recon,commit,usage0;usage1;...
// where usage is the count of distinct codebook rows selected per latent in
// the batch.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "haqae/checkpoint.hpp"
#include "haqae/eval.hpp"

namespace haqae {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Global-norm clipping followed by a bias-corrected Adam update
// (beta1=0.9, beta2=0.999, eps=1e-8).
template <class Real>
void adam_step(const std::vector<std::pair<std::string, Tensor<Real>>>& params,
               AdamState<Real>& state, Real lr, Real clip_norm) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.size(), Real(0));
      state.v[i].assign(params[i].second.size(), Real(0));
    }
  }
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (t.grad().empty()) continue;
    for (Real g : t.grad()) {
      if (!std::isfinite(static_cast<double>(g)))
        throw DivergenceError("adam_step: non-finite gradient in parameter '" + name + "'");
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  const Real scale_factor = norm > static_cast<double>(clip_norm)
                                ? static_cast<Real>(static_cast<double>(clip_norm) / norm)
                                : Real(1);
  ++state.step;
  const Real b1 = Real(0.9), b2 = Real(0.999), eps = Real(1e-8);
  const Real bc1 = Real(1) - static_cast<Real>(std::pow(0.9, static_cast<double>(state.step)));
  const Real bc2 = Real(1) - static_cast<Real>(std::pow(0.999, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = const_cast<Tensor<Real>&>(params[i].second);
    if (t.grad().empty()) continue;
    for (std::size_t j = 0; j < t.size(); ++j) {
      const Real g = t.grad()[j] * scale_factor;
      state.m[i][j] = b1 * state.m[i][j] + (Real(1) - b1) * g;
      state.v[i][j] = b2 * state.v[i][j] + (Real(1) - b2) * g * g;
      const Real mhat = state.m[i][j] / bc1;
      const Real vhat = state.v[i][j] / bc2;
      t.values()[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <class Real>
void zero_grads(const std::vector<std::pair<std::string, Tensor<Real>>>& params) {
  for (const auto& [name, t] : params) const_cast<Tensor<Real>&>(t).zero_grad();
}

// ---------------------------------------------------------------------------
// Batch objective
// ---------------------------------------------------------------------------

template <class Real>
struct BatchLoss {
  Tensor<Real> total;  // scalar on the tape
  double nll = 0.0;    // token-mean NLL component (value)
  double recon = 0.0;
  double commit = 0.0;
  std::vector<std::set<std::size_t>> codes_used;  // per latent
};

// total = token-mean NLL + (1/B) sum recon + (1/B) sum commit.
// Sequences are processed one at a time; gradients accumulate on the shared
// tape, which is equivalent to padded batching with loss masking.
template <class Real>
BatchLoss<Real> batch_loss(const Model<Real>& m, const Corpus& batch,
                           std::mt19937_64* dropout_rng = nullptr) {
  BatchLoss<Real> out;
  if (m.has_latents()) out.codes_used.resize(m.cfg.M);
  std::vector<Tensor<Real>> nll_totals, recons, commits;
  std::size_t tokens = 0;
  for (const auto& seq : batch) {
    SequenceForward<Real> fwd = sequence_forward(m, encode_ids(m, seq), dropout_rng);
    tokens += fwd.nll.per_token.size();
    nll_totals.push_back(fwd.nll.total);
    if (fwd.recon) recons.push_back(*fwd.recon);
    if (fwd.commit) commits.push_back(*fwd.commit);
    for (std::size_t i = 0; i < fwd.indices.size(); ++i) out.codes_used[i].insert(fwd.indices[i]);
  }
  Tensor<Real> nll = scale(sum_all(concat_cols(nll_totals)), Real(1) / static_cast<Real>(tokens));
  out.nll = static_cast<double>(nll.item());
  out.total = nll;
  if (!recons.empty()) {
    const Real inv_b = Real(1) / static_cast<Real>(batch.size());
    Tensor<Real> recon = scale(sum_all(concat_cols(recons)), inv_b);
    Tensor<Real> commit = scale(sum_all(concat_cols(commits)), inv_b);
    out.recon = static_cast<double>(recon.item());
    out.commit = static_cast<double>(commit.item());
    out.total = add(add(nll, recon), commit);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct MetricRecord {
  std::size_t step;
  std::string split;
  double nll, ppl, recon, commit;
  std::vector<std::size_t> usage;

  std::string to_line() const {
    std::ostringstream os;
    os.precision(10);
    os << step << ',' << split << ',' << nll << ',' << ppl << ',' << recon << ',' << commit << ',';
    for (std::size_t i = 0; i < usage.size(); ++i) os << (i ? ";" : "") << usage[i];
    return os.str();
  }
};

template <class Real>
struct TrainResult {
  Model<Real> model;  // final parameters; the best-validation snapshot goes to checkpoint_path
  TrainState<Real> state;
  std::vector<MetricRecord> log;
  double best_val_nll = std::numeric_limits<double>::infinity();
};

template <class Real>
TrainResult<Real> train(const HAQAEConfig& cfg, const Corpus& train_corpus,
                        const Corpus& valid_corpus,
                        const std::string& checkpoint_path = "",
                        std::ostream* metric_out = nullptr, std::ostream* progress = nullptr) {
  if (train_corpus.empty() || valid_corpus.empty())
    throw std::invalid_argument("train: corpora must be non-empty");
  Vocabulary vocab = build_vocabulary(train_corpus, cfg.vocab_max);
  Model<Real> model = build_variant<Real>(cfg, vocab);
  const auto params = model.named_params();

  TrainResult<Real> result;
  TrainState<Real>& state = result.state;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  auto snapshot = [&]() {
    std::ostringstream rs;
    rs << rng;
    state.rng_state = rs.str();
    if (!checkpoint_path.empty()) save_checkpoint(model, state, checkpoint_path);
  };
  auto log_record = [&](MetricRecord rec) {
    if (metric_out) *metric_out << rec.to_line() << '\n';
    result.log.push_back(std::move(rec));
  };
  auto validate = [&]() {
    PerplexityResult val = perplexity_eval(model, valid_corpus);
    log_record({state.adam.step, "valid", val.nll, val.ppl, 0.0, 0.0, {}});
    if (val.nll < state.best_val_nll) {
      state.best_val_nll = val.nll;
      snapshot();
    }
    if (progress)
      *progress << "step " << state.adam.step << " valid nll=" << val.nll << " ppl=" << val.ppl
                << "\n";
  };

  std::vector<std::size_t> order(train_corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    state.epoch = epoch;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size() && !done; b += cfg.batch_size) {
      Corpus batch;
      for (std::size_t i = b; i < std::min(b + cfg.batch_size, order.size()); ++i)
        batch.push_back(train_corpus[order[i]]);
      zero_grads(params);
      BatchLoss<Real> loss;
      try {
        Tape<Real> tape;
        TapeScope<Real> scope(tape);
        loss = batch_loss(model, batch, &rng);
        if (!std::isfinite(loss.total.item()))
          throw DivergenceError("train: non-finite loss at step " +
                                std::to_string(state.adam.step + 1));
        backward(tape, loss.total);
        adam_step(params, state.adam, Real(cfg.lr), Real(cfg.clip_norm));
      } catch (const DivergenceError&) {
        snapshot();  // keep the last good parameters on disk
        throw;
      } catch (const std::domain_error& e) {
        // Saturated probabilities / non-finite activations mid-batch are a
        // divergence of the optimization, not a usage error.
        snapshot();
        throw DivergenceError("train: numeric failure at step " +
                              std::to_string(state.adam.step + 1) + ": " + e.what());
      }
      // total = nll + recon + commit holds by construction; kept observable.
      if (state.adam.step % std::max<std::size_t>(cfg.log_interval, 1) == 0) {
        MetricRecord rec{state.adam.step, "train", loss.nll, std::exp(loss.nll),
                         loss.recon, loss.commit, {}};
        for (const auto& s : loss.codes_used) rec.usage.push_back(s.size());
        log_record(std::move(rec));
      }
      if (state.adam.step % std::max<std::size_t>(cfg.val_interval, 1) == 0) validate();
      if (cfg.max_steps && state.adam.step >= cfg.max_steps) done = true;
    }
  }
  validate();
  if (!std::isfinite(state.best_val_nll)) snapshot();
  result.best_val_nll = state.best_val_nll;
  result.model = std::move(model);
  return result;
}

}  // namespace haqae

#endif  // HAQAE_TRAIN_HPP
