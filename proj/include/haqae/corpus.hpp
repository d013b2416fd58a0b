#ifndef HAQAE_CORPUS_HPP
#define HAQAE_CORPUS_HPP

// Event-tuple data model, flat tokenization, vocabulary, length filtering
// and line-delimited corpus I/O.
//
// Corpus file format: UTF-8, one sequence per line,
//   source_id TAB v|s|o|p TAB v|s|o|p ...
// with "null" marking an absent preposition. EOS is a model-side concept and
// never stored in files.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace haqae {

struct EventTuple {
  std::string verb;
  std::string subject;
  std::string object;
  std::string preposition;  // "null" when absent

  bool operator==(const EventTuple&) const = default;
};

struct EventSequence {
  std::vector<EventTuple> events;
  std::string source_id;

  bool operator==(const EventSequence&) const = default;

  // Flat token count including "tup" separators, excluding EOS.
  std::size_t token_length() const {
    return events.empty() ? 0 : events.size() * 4 + (events.size() - 1);
  }
};

using Corpus = std::vector<EventSequence>;

inline const std::string kNullToken = "null";
inline const std::string kTupToken = "tup";

// Flat rendering: v s o p [tup v s o p]... No EOS; the model appends it.
inline std::vector<std::string> tokenize_events(const EventSequence& seq) {
  if (seq.events.empty()) throw std::invalid_argument("tokenize_events: empty sequence");
  std::vector<std::string> out;
  out.reserve(seq.token_length());
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    if (i) out.push_back(kTupToken);
    const EventTuple& e = seq.events[i];
    out.push_back(e.verb);
    out.push_back(e.subject);
    out.push_back(e.object);
    out.push_back(e.preposition.empty() ? kNullToken : e.preposition);
  }
  return out;
}

// Inverse of tokenize_events on well-formed renderings.
inline EventSequence detokenize_events(const std::vector<std::string>& toks,
                                       std::string source_id = "") {
  EventSequence seq;
  seq.source_id = std::move(source_id);
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!seq.events.empty()) {
      if (toks[i] != kTupToken)
        throw std::invalid_argument("detokenize_events: expected 'tup' at token " + std::to_string(i));
      ++i;
    }
    if (i + 4 > toks.size())
      throw std::invalid_argument("detokenize_events: truncated event at token " + std::to_string(i));
    seq.events.push_back({toks[i], toks[i + 1], toks[i + 2], toks[i + 3]});
    i += 4;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNull = 4;
  static constexpr int kTup = 5;
  static constexpr int kReserved = 6;

  Vocabulary() {
    for (const char* t : {"<pad>", "<unk>", "<s>", "</s>", "null", "tup"}) add(t);
  }

  int add(const std::string& tok) {
    auto it = ids_.find(tok);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    ids_.emplace(tok, id);
    tokens_.push_back(tok);
    return id;
  }

  int encode(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& decode(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("Vocabulary::decode: id " + std::to_string(id));
    return tokens_[id];
  }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode_all(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(encode(t));
    return out;
  }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

// Keeps the max_size most frequent tokens, ties broken lexicographically.
inline Vocabulary build_vocabulary(const Corpus& corpus, std::size_t max_size) {
  if (max_size <= Vocabulary::kReserved)
    throw std::invalid_argument("build_vocabulary: max_size " + std::to_string(max_size) +
                                " does not exceed the " + std::to_string(Vocabulary::kReserved) +
                                " reserved tokens");
  std::map<std::string, std::size_t> freq;
  for (const auto& seq : corpus)
    for (const auto& tok : tokenize_events(seq)) ++freq[tok];
  freq.erase(kNullToken);
  freq.erase(kTupToken);
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  const std::size_t budget = max_size - Vocabulary::kReserved;
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) vocab.add(ranked[i].first);
  return vocab;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

inline const std::set<std::string>& default_stop_predicates() {
  static const std::set<std::string> s = {"is",  "are", "be",   "was", "were",
                                          "has", "have", "had", "said"};
  return s;
}

// Drops stop-predicate events, collapses consecutive repeated predicates and
// enforces min_len <= token_length <= max_len on the flat rendering (EOS not
// counted).
inline Corpus filter_corpus(const Corpus& corpus, std::size_t min_len = 8, std::size_t max_len = 50,
                            const std::set<std::string>& stop_predicates = default_stop_predicates()) {
  if (min_len > max_len)
    throw std::invalid_argument("filter_corpus: min_len " + std::to_string(min_len) +
                                " exceeds max_len " + std::to_string(max_len));
  Corpus out;
  for (const auto& seq : corpus) {
    EventSequence kept;
    kept.source_id = seq.source_id;
    for (const auto& e : seq.events) {
      if (stop_predicates.count(e.verb)) continue;
      if (!kept.events.empty() && kept.events.back().verb == e.verb) continue;
      kept.events.push_back(e);
    }
    const std::size_t len = kept.token_length();
    if (len >= min_len && len <= max_len) out.push_back(std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

inline EventTuple parse_event_field(const std::string& field, std::size_t line_no) {
  std::vector<std::string> slots;
  std::string cur;
  for (char c : field) {
    if (c == '|') {
      slots.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  slots.push_back(cur);
  if (slots.size() != 4)
    throw std::runtime_error("corpus line " + std::to_string(line_no) + ": event '" + field +
                             "' has " + std::to_string(slots.size()) + " slots, expected 4");
  for (const auto& s : slots)
    if (s.empty())
      throw std::runtime_error("corpus line " + std::to_string(line_no) + ": empty slot in '" +
                               field + "'");
  return {slots[0], slots[1], slots[2], slots[3]};
}

inline Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    EventSequence seq;
    bool first = true;
    while (std::getline(ls, field, '\t')) {
      if (first) {
        seq.source_id = field;
        first = false;
      } else if (!field.empty()) {
        seq.events.push_back(parse_event_field(field, line_no));
      }
    }
    if (first)
      throw std::runtime_error("corpus line " + std::to_string(line_no) + ": missing source id");
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

inline Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_corpus: cannot open " + path);
  return read_corpus(in);
}

inline void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& seq : corpus) {
    out << seq.source_id;
    for (const auto& e : seq.events)
      out << '\t' << e.verb << '|' << e.subject << '|' << e.object << '|'
          << (e.preposition.empty() ? kNullToken : e.preposition);
    out << '\n';
  }
}

inline void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_corpus: cannot open " + path);
  write_corpus(corpus, out);
}

}  // namespace haqae

#endif  // HAQAE_CORPUS_HPP
