// Command-line entry point: corpus preparation, synthetic generation,
// training, evaluation, generation and latent probing.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "haqae/eval.hpp"
#include "haqae/train.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("input path does not exist: " + path);
}

haqae::HAQAEConfig load_config(const std::string& config_path,
                               const std::vector<std::string>& sets,
                               const std::string& variant, std::uint64_t seed, bool has_seed) {
  haqae::HAQAEConfig cfg;
  if (!config_path.empty()) {
    require_file(config_path);
    cfg = haqae::parse_config_file(config_path);
  }
  if (!variant.empty()) {
    cfg.variant = haqae::parse_variant(variant);
    cfg.apply_variant_defaults();
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (key == "preset") {
      if (value != "desk") throw UsageError("unknown preset '" + value + "'");
      cfg.apply_desk_scale();
    } else {
      cfg.set(key, value);
    }
  }
  if (has_seed) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

haqae::EventTuple parse_event_flag(const std::string& spec) {
  std::vector<std::string> slots;
  std::string cur;
  for (char c : spec) {
    if (c == ',') {
      slots.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  slots.push_back(cur);
  if (slots.size() != 4) throw UsageError("--event expects v,s,o,p, got '" + spec + "'");
  return {slots[0], slots[1], slots[2], slots[3]};
}

int run(int argc, char** argv) {
  CLI::App app{"haqae: hierarchical quantized autoencoder for event scripts"};
  app.require_subcommand(1);

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "generate a labeled synthetic corpus");
  std::string grammar_path, out_path, emit_grammar;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  synth->add_option("--grammar", grammar_path, "grammar file (default: built-in grammar)");
  synth->add_option("--n", n, "number of sequences");
  synth->add_option("--seed", seed, "rng seed");
  synth->add_option("--out", out_path, "output corpus file");
  synth->add_option("--emit-grammar", emit_grammar, "write the built-in grammar to this path");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "filter a corpus (stop predicates, lengths)");
  std::string in_path;
  std::size_t min_len = 8, max_len = 50;
  prep->add_option("--in", in_path, "input corpus")->required();
  prep->add_option("--out", out_path, "output corpus")->required();
  prep->add_option("--min-len", min_len, "minimum flat token length");
  prep->add_option("--max-len", max_len, "maximum flat token length");

  // train
  auto* tr = app.add_subcommand("train", "train a model variant");
  std::string train_path, valid_path, out_dir, config_path, variant;
  std::vector<std::string> sets;
  tr->add_option("--train", train_path, "training corpus")->required();
  tr->add_option("--valid", valid_path, "validation corpus")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--config", config_path, "config file (key = value)");
  tr->add_option("--set", sets, "config override key=value (repeatable)");
  tr->add_option("--variant", variant, "haqae|nohier|rnnlm|rnnlm_role");
  auto* seed_opt = tr->add_option("--seed", seed, "rng seed (overrides config)");

  // eval-ppl
  auto* ppl = app.add_subcommand("eval-ppl", "per-word NLL / perplexity (EOS excluded)");
  std::string model_path, corpus_path, records_path;
  ppl->add_option("--model", model_path, "checkpoint file")->required();
  ppl->add_option("--corpus", corpus_path, "evaluation corpus")->required();
  ppl->add_option("--out", records_path, "write a line-delimited record file");

  // eval-cloze
  auto* cloze = app.add_subcommand("eval-cloze", "inverse narrative cloze accuracy");
  std::size_t n_sets = 2000;
  std::string export_prefix;
  cloze->add_option("--model", model_path, "checkpoint file, or 'random' for the baseline scorer")
      ->required();
  cloze->add_option("--corpus", corpus_path, "source corpus")->required();
  cloze->add_option("--sets", n_sets, "number of cloze instances");
  cloze->add_option("--seed", seed, "rng seed");
  cloze->add_option("--export", export_prefix, "export instances to <prefix>.tsv / <prefix>.labels");

  // generate
  auto* gen = app.add_subcommand("generate", "generate a script from a 2-event seed");
  std::vector<std::string> event_flags;
  std::string mode = "greedy";
  std::size_t max_events = 5;
  bool no_constraints = false;
  gen->add_option("--model", model_path, "checkpoint file")->required();
  gen->add_option("--event", event_flags, "seed event v,s,o,p (give twice)")->expected(1, 2);
  gen->add_option("--mode", mode, "greedy|sample");
  gen->add_option("--seed", seed, "sampling seed");
  gen->add_option("--max-events", max_events, "total event budget, seed included");
  gen->add_flag("--no-constraints", no_constraints, "disable predicate/argument constraints");

  // probe-latents
  auto* probe = app.add_subcommand("probe-latents", "override one latent and regenerate");
  std::size_t seq_index = 0, latent_index = 0, value = 0;
  std::string probe_mode = "frozen";
  probe->add_option("--model", model_path, "checkpoint file")->required();
  probe->add_option("--corpus", corpus_path, "corpus providing the probed sequence")->required();
  probe->add_option("--index", seq_index, "sequence index in the corpus");
  probe->add_option("--latent", latent_index, "latent to override")->required();
  probe->add_option("--value", value, "codebook row to assign")->required();
  probe->add_option("--mode", probe_mode, "frozen|recompute descendants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    haqae::SyntheticGrammar g =
        grammar_path.empty() ? haqae::default_grammar()
                             : (require_file(grammar_path), haqae::read_grammar(grammar_path));
    if (!emit_grammar.empty()) {
      haqae::write_grammar(haqae::default_grammar(), emit_grammar);
      std::cout << "wrote default grammar to " << emit_grammar << "\n";
    }
    if (!out_path.empty()) {
      haqae::Corpus corpus = haqae::generate_synthetic_corpus(g, n, seed);
      haqae::write_corpus(corpus, out_path);
      std::cout << "wrote " << corpus.size() << " sequences to " << out_path << "\n";
    } else if (emit_grammar.empty()) {
      throw UsageError("synth-corpus: provide --out and/or --emit-grammar");
    }
    return 0;
  }

  if (prep->parsed()) {
    require_file(in_path);
    haqae::Corpus corpus = haqae::read_corpus(in_path);
    haqae::Corpus filtered = haqae::filter_corpus(corpus, min_len, max_len);
    haqae::write_corpus(filtered, out_path);
    std::cout << "kept " << filtered.size() << " of " << corpus.size() << " sequences\n";
    return 0;
  }

  if (tr->parsed()) {
    require_file(train_path);
    require_file(valid_path);
    haqae::HAQAEConfig cfg = load_config(config_path, sets, variant, seed, seed_opt->count() > 0);
    haqae::Corpus train_c = haqae::filter_corpus(haqae::read_corpus(train_path), cfg.min_len, cfg.max_len);
    haqae::Corpus valid_c = haqae::filter_corpus(haqae::read_corpus(valid_path), cfg.min_len, cfg.max_len);
    fs::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.log");
    auto result = haqae::train<Real>(cfg, train_c, valid_c, out_dir + "/checkpoint.bin", &metrics,
                                     &std::cout);
    std::cout << "best valid nll " << std::setprecision(10) << result.best_val_nll << " ppl "
              << std::exp(result.best_val_nll) << "\n";
    return 0;
  }

  if (ppl->parsed()) {
    require_file(model_path);
    require_file(corpus_path);
    auto [model, state] = haqae::load_checkpoint<Real>(model_path);
    haqae::Corpus corpus = haqae::read_corpus(corpus_path);
    haqae::PerplexityResult res = haqae::perplexity_eval(model, corpus);
    if (!records_path.empty()) {
      std::ofstream rec(records_path);
      rec << std::setprecision(10) << "metric,value\nnll," << res.nll << "\nppl," << res.ppl << "\n";
    }
    std::cout << std::setprecision(10) << "nll " << res.nll << "\nppl " << res.ppl << "\n";
    return 0;
  }

  if (cloze->parsed()) {
    require_file(corpus_path);
    haqae::Corpus corpus = haqae::read_corpus(corpus_path);
    auto instances = haqae::build_cloze_set(corpus, n_sets, seed);
    if (!export_prefix.empty()) {
      haqae::Corpus flat;
      std::ofstream labels(export_prefix + ".labels");
      labels << "instance,candidate,is_legit\n";
      for (std::size_t i = 0; i < instances.size(); ++i) {
        flat.push_back(instances[i].legit);
        labels << i << ",0,1\n";
        for (std::size_t d = 0; d < instances[i].detractors.size(); ++d) {
          flat.push_back(instances[i].detractors[d]);
          labels << i << ',' << (d + 1) << ",0\n";
        }
      }
      haqae::write_corpus(flat, export_prefix + ".tsv");
    }
    double acc;
    if (model_path == "random") {
      acc = haqae::cloze_accuracy_random(instances, seed);
    } else {
      require_file(model_path);
      auto [model, state] = haqae::load_checkpoint<Real>(model_path);
      acc = haqae::cloze_accuracy(model, instances);
    }
    std::cout << std::setprecision(6) << "cloze accuracy " << 100.0 * acc << "% over "
              << instances.size() << " sets\n";
    return 0;
  }

  if (gen->parsed()) {
    require_file(model_path);
    auto [model, state] = haqae::load_checkpoint<Real>(model_path);
    if (!model.has_latents()) throw UsageError("generate requires a haqae or nohier checkpoint");
    if (event_flags.size() != 2) throw UsageError("generate needs exactly two --event flags");
    std::vector<haqae::EventTuple> seed_events;
    for (const auto& f : event_flags) seed_events.push_back(parse_event_flag(f));
    haqae::EventSequence seed_seq;
    seed_seq.events = seed_events;
    auto assignment = haqae::infer_for_ids(model, haqae::encode_ids(model, seed_seq));
    haqae::GenerationConstraints constraints;
    constraints.forbid_repeated_predicates = !no_constraints;
    constraints.forbid_equal_subject_object = !no_constraints;
    constraints.max_events = max_events;
    haqae::EventSequence out = haqae::generate(
        model.dec, model.dec_emb, model.vocab, assignment.embeddings(),
        haqae::decoder_init_state(model, assignment), seed_events, constraints,
        mode == "sample" ? haqae::GenMode::sample : haqae::GenMode::greedy, seed);
    for (std::size_t i = 0; i < out.events.size(); ++i) {
      const auto& e = out.events[i];
      std::cout << (i < seed_events.size() ? "seed: " : "gen:  ") << e.verb << ' ' << e.subject
                << ' ' << e.object << ' ' << e.preposition << "\n";
    }
    return 0;
  }

  if (probe->parsed()) {
    require_file(model_path);
    require_file(corpus_path);
    auto [model, state] = haqae::load_checkpoint<Real>(model_path);
    if (!model.has_latents()) throw UsageError("probe-latents requires a haqae or nohier checkpoint");
    haqae::Corpus corpus = haqae::read_corpus(corpus_path);
    if (seq_index >= corpus.size()) throw UsageError("--index exceeds corpus size");
    haqae::ProbeReport rep = haqae::latent_probe(
        model, corpus[seq_index], latent_index, value,
        probe_mode == "recompute" ? haqae::ProbeMode::recompute : haqae::ProbeMode::frozen);
    std::cout << "base codes:";
    for (auto k : rep.base_indices) std::cout << ' ' << k;
    std::cout << "\nprobed codes:";
    for (auto k : rep.probed_indices) std::cout << ' ' << k;
    std::cout << "\nedit distance " << rep.edit_distance << "\n";
    auto dump = [](const char* tag, const haqae::EventSequence& s) {
      std::cout << tag;
      for (const auto& e : s.events)
        std::cout << " (" << e.verb << ' ' << e.subject << ' ' << e.object << ' ' << e.preposition
                  << ")";
      std::cout << "\n";
    };
    dump("base regen:  ", rep.base_regen);
    dump("probed regen:", rep.probed_regen);
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const haqae::DivergenceError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
