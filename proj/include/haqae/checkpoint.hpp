#ifndef HAQAE_CHECKPOINT_HPP
#define HAQAE_CHECKPOINT_HPP

// Versioned binary checkpoint: config snapshot, vocabulary, parameter
// manifest (name, shape) followed by raw little-endian value buffers, then
// optimizer state. Reload reproduces forward outputs bitwise.

#include <cstring>
#include <fstream>
#include <sstream>

#include "haqae/model.hpp"

namespace haqae {

template <class Real>
struct AdamState {
  std::vector<std::vector<Real>> m, v;  // aligned with Model::named_params order
  std::size_t step = 0;
};

template <class Real>
struct TrainState {
  AdamState<Real> adam;
  std::size_t epoch = 0;
  double best_val_nll = std::numeric_limits<double>::infinity();
  std::string rng_state;  // serialized mt19937_64
};

namespace detail {

inline const char kCkptMagic[8] = {'H', 'Q', 'A', 'E', 'C', 'K', 'P', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}
template <class Real>
void write_buf(std::ostream& out, const std::vector<Real>& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(Real)));
}
template <class Real>
std::vector<Real> read_buf(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::vector<Real> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(Real)));
  if (!in) throw std::runtime_error("checkpoint: truncated buffer");
  return v;
}

}  // namespace detail

template <class Real>
void save_checkpoint(const Model<Real>& model, const TrainState<Real>& state, std::ostream& out) {
  out.write(detail::kCkptMagic, 8);
  detail::write_pod<std::uint32_t>(out, sizeof(Real));
  detail::write_str(out, model.cfg.to_text());
  std::ostringstream vs;
  for (const auto& tok : model.vocab.tokens()) vs << tok << '\n';
  detail::write_str(out, vs.str());
  const auto params = model.named_params();
  detail::write_pod<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    detail::write_str(out, name);
    detail::write_pod<std::uint64_t>(out, t.rows());
    detail::write_pod<std::uint64_t>(out, t.cols());
    detail::write_buf(out, t.values());
  }
  detail::write_pod<std::uint64_t>(out, state.adam.step);
  detail::write_pod<std::uint64_t>(out, state.epoch);
  detail::write_pod<double>(out, state.best_val_nll);
  detail::write_str(out, state.rng_state);
  detail::write_pod<std::uint8_t>(out, state.adam.m.empty() ? 0 : 1);
  if (!state.adam.m.empty()) {
    detail::write_pod<std::uint64_t>(out, state.adam.m.size());
    for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
      detail::write_buf(out, state.adam.m[i]);
      detail::write_buf(out, state.adam.v[i]);
    }
  }
}

template <class Real>
void save_checkpoint(const Model<Real>& model, const TrainState<Real>& state,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  save_checkpoint(model, state, out);
}

template <class Real>
std::pair<Model<Real>, TrainState<Real>> load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic (wrong file or version)");
  const auto real_size = detail::read_pod<std::uint32_t>(in);
  if (real_size != sizeof(Real))
    throw std::runtime_error("checkpoint: element size " + std::to_string(real_size) +
                             " does not match build (" + std::to_string(sizeof(Real)) + ")");
  std::istringstream cfg_in(detail::read_str(in));
  HAQAEConfig cfg = parse_config(cfg_in);

  Vocabulary vocab;
  {
    std::istringstream vin(detail::read_str(in));
    std::string tok;
    std::size_t idx = 0;
    while (std::getline(vin, tok)) {
      if (idx >= Vocabulary::kReserved) vocab.add(tok);
      ++idx;
    }
  }

  Model<Real> model = build_variant<Real>(cfg, vocab);
  auto params = model.named_params();
  const auto nparams = detail::read_pod<std::uint64_t>(in);
  if (nparams != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto& [name, t] : params) {
    const std::string fname = detail::read_str(in);
    const auto rows = detail::read_pod<std::uint64_t>(in);
    const auto cols = detail::read_pod<std::uint64_t>(in);
    if (fname != name || rows != t.rows() || cols != t.cols())
      throw std::runtime_error("checkpoint: parameter '" + fname + "' does not match model '" +
                               name + "'");
    t.values() = detail::read_buf<Real>(in);
  }
  TrainState<Real> state;
  state.adam.step = detail::read_pod<std::uint64_t>(in);
  state.epoch = detail::read_pod<std::uint64_t>(in);
  state.best_val_nll = detail::read_pod<double>(in);
  state.rng_state = detail::read_str(in);
  if (detail::read_pod<std::uint8_t>(in)) {
    const auto n = detail::read_pod<std::uint64_t>(in);
    state.adam.m.resize(n);
    state.adam.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      state.adam.m[i] = detail::read_buf<Real>(in);
      state.adam.v[i] = detail::read_buf<Real>(in);
    }
  }
  return {std::move(model), std::move(state)};
}

template <class Real>
std::pair<Model<Real>, TrainState<Real>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  return load_checkpoint<Real>(in);
}

}  // namespace haqae

#endif  // HAQAE_CHECKPOINT_HPP
