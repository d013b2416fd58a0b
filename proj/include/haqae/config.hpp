#ifndef HAQAE_CONFIG_HPP
#define HAQAE_CONFIG_HPP

// Architecture and training hyperparameters, with a flat "key = value"
// config-file format using section prefixes (e.g. "model.M = 5").
// Later keys override earlier ones; command-line overrides are applied by
// feeding them through the same setter.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace haqae {

enum class Variant { haqae, nohier, rnnlm, rnnlm_role };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::haqae: return "haqae";
    case Variant::nohier: return "nohier";
    case Variant::rnnlm: return "rnnlm";
    case Variant::rnnlm_role: return "rnnlm_role";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "haqae") return Variant::haqae;
  if (s == "nohier") return Variant::nohier;
  if (s == "rnnlm") return Variant::rnnlm;
  if (s == "rnnlm_role") return Variant::rnnlm_role;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

struct HAQAEConfig {
  Variant variant = Variant::haqae;

  // Architecture
  std::size_t M = 5;
  std::size_t K = 512;
  std::size_t latent_dim = 256;
  std::size_t enc_hidden = 512;  // per direction; encoder states are 2x this
  std::size_t dec_hidden = 512;
  std::size_t word_dim = 300;
  std::size_t vocab_max = 50000;
  std::size_t role_dim = 300;           // rnnlm_role only
  std::size_t nohier_init_latent = 0;   // which latent initializes the decoder
  bool tie_embeddings = false;          // share encoder/decoder word tables

  // Objective / optimization
  double beta = 0.25;
  double lr = 0.0005;
  double clip_norm = 5.0;
  double dropout = 0.0;  // embedding-layer dropout (baselines use 0.15)
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 1;
  std::size_t val_interval = 500;
  std::size_t log_interval = 100;

  // Data
  std::size_t min_len = 8;
  std::size_t max_len = 50;
  std::string embedding_file;  // optional pretrained word-vector import

  void apply_desk_scale() {
    M = 2;
    K = 8;
    latent_dim = 32;
    enc_hidden = 32;  // states are 64-dim
    dec_hidden = 64;
    word_dim = 32;
    batch_size = 16;
    lr = 0.004;  // the full-scale rate is far too conservative at these dims
  }

  // Baseline hyperparameters from the reference setup.
  void apply_variant_defaults() {
    if (variant == Variant::rnnlm || variant == Variant::rnnlm_role) {
      lr = 0.001;
      clip_norm = 10.0;
      dropout = 0.15;
    }
  }

  void set(const std::string& key, const std::string& value) {
    auto to_u = [&](const std::string& v) { return static_cast<std::size_t>(std::stoull(v)); };
    auto to_b = [&](const std::string& v) { return v == "true" || v == "1" || v == "yes"; };
    if (key == "model.variant") variant = parse_variant(value);
    else if (key == "model.M") M = to_u(value);
    else if (key == "model.K") K = to_u(value);
    else if (key == "model.latent_dim") latent_dim = to_u(value);
    else if (key == "model.enc_hidden") enc_hidden = to_u(value);
    else if (key == "model.dec_hidden") dec_hidden = to_u(value);
    else if (key == "model.word_dim") word_dim = to_u(value);
    else if (key == "model.vocab_max") vocab_max = to_u(value);
    else if (key == "model.role_dim") role_dim = to_u(value);
    else if (key == "model.nohier_init_latent") nohier_init_latent = to_u(value);
    else if (key == "model.tie_embeddings") tie_embeddings = to_b(value);
    else if (key == "model.beta") beta = std::stod(value);
    else if (key == "train.lr") lr = std::stod(value);
    else if (key == "train.clip_norm") clip_norm = std::stod(value);
    else if (key == "train.dropout") dropout = std::stod(value);
    else if (key == "train.batch_size") batch_size = to_u(value);
    else if (key == "train.epochs") epochs = to_u(value);
    else if (key == "train.max_steps") max_steps = to_u(value);
    else if (key == "train.seed") seed = std::stoull(value);
    else if (key == "train.val_interval") val_interval = to_u(value);
    else if (key == "train.log_interval") log_interval = to_u(value);
    else if (key == "data.min_len") min_len = to_u(value);
    else if (key == "data.max_len") max_len = to_u(value);
    else if (key == "data.embedding_file") embedding_file = value;
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
    };
    positive(M, "model.M");
    positive(K, "model.K");
    positive(latent_dim, "model.latent_dim");
    positive(enc_hidden, "model.enc_hidden");
    positive(dec_hidden, "model.dec_hidden");
    positive(word_dim, "model.word_dim");
    positive(batch_size, "train.batch_size");
    if (vocab_max <= 6) throw std::invalid_argument("config: model.vocab_max too small");
    if (!(beta > 0)) throw std::invalid_argument("config: model.beta must be positive");
    if (!(clip_norm > 0)) throw std::invalid_argument("config: train.clip_norm must be positive");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("config: train.dropout outside [0,1)");
    if (min_len > max_len) throw std::invalid_argument("config: data.min_len exceeds data.max_len");
    if (nohier_init_latent >= M)
      throw std::invalid_argument("config: model.nohier_init_latent out of range");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "model.variant = " << variant_name(variant) << "\n"
       << "model.M = " << M << "\n"
       << "model.K = " << K << "\n"
       << "model.latent_dim = " << latent_dim << "\n"
       << "model.enc_hidden = " << enc_hidden << "\n"
       << "model.dec_hidden = " << dec_hidden << "\n"
       << "model.word_dim = " << word_dim << "\n"
       << "model.vocab_max = " << vocab_max << "\n"
       << "model.role_dim = " << role_dim << "\n"
       << "model.nohier_init_latent = " << nohier_init_latent << "\n"
       << "model.tie_embeddings = " << (tie_embeddings ? "true" : "false") << "\n"
       << "model.beta = " << beta << "\n"
       << "train.lr = " << lr << "\n"
       << "train.clip_norm = " << clip_norm << "\n"
       << "train.dropout = " << dropout << "\n"
       << "train.batch_size = " << batch_size << "\n"
       << "train.epochs = " << epochs << "\n"
       << "train.max_steps = " << max_steps << "\n"
       << "train.seed = " << seed << "\n"
       << "train.val_interval = " << val_interval << "\n"
       << "train.log_interval = " << log_interval << "\n"
       << "data.min_len = " << min_len << "\n"
       << "data.max_len = " << max_len << "\n";
    if (!embedding_file.empty()) os << "data.embedding_file = " << embedding_file << "\n";
    return os.str();
  }
};

// Parses "key = value" lines ('#' comments allowed). A "preset = desk" line
// and the variant key apply their defaults first, then every explicit key is
// re-applied in file order.
inline HAQAEConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> kvs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    kvs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  HAQAEConfig cfg;
  for (const auto& [k, v] : kvs)
    if (k == "preset" && v == "desk") cfg.apply_desk_scale();
  for (const auto& [k, v] : kvs)
    if (k == "model.variant") cfg.variant = parse_variant(v);
  cfg.apply_variant_defaults();
  for (const auto& [k, v] : kvs) {
    if (k == "preset") continue;
    cfg.set(k, v);
  }
  return cfg;
}

inline HAQAEConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config(in);
}

}  // namespace haqae

#endif  // HAQAE_CONFIG_HPP
