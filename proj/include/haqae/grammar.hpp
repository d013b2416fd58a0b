#ifndef HAQAE_GRAMMAR_HPP
#define HAQAE_GRAMMAR_HPP

// Synthetic hierarchical-script grammar: topics branch into tracks, each
// track is an ordered list of stages with alternative event templates.
// Generated corpora carry ground-truth (topic, track) labels in their
// source ids as "<topic>.<track>.<index>".
//
// Grammar file format (format=1): line-oriented key-value text with nested
// begin/end sections:
//
//   format=1
//   noise_rate=0.05
//   pool crowd = residents,witnesses,neighbors
//   begin noise
//     event muttered|someone|something|null
//   end noise
//   begin topic fire
//     begin track forest prob=0.5
//       begin stage
//         event reported|$crowd|fire|null
//         event saw|$crowd|smoke|null
//       end stage
//       ...
//     end track
//   end topic
//
// Template slots starting with '$' are sampled from the named pool.

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "haqae/corpus.hpp"

namespace haqae {

struct EventTemplate {
  std::string verb, subject, object, preposition;  // slots may be "$pool" refs
};

struct Stage {
  std::vector<EventTemplate> alternatives;
};

struct Track {
  std::string name;
  double prob = 0.0;
  std::vector<Stage> stages;
};

struct Topic {
  std::string name;
  std::vector<Track> tracks;
};

struct SyntheticGrammar {
  std::vector<Topic> topics;
  std::map<std::string, std::vector<std::string>> pools;
  std::vector<EventTemplate> noise_events;
  double noise_rate = 0.0;

  void validate() const {
    if (topics.empty()) throw std::invalid_argument("grammar: no topics");
    if (noise_rate < 0.0 || noise_rate > 1.0)
      throw std::invalid_argument("grammar: noise_rate must lie in [0,1]");
    if (noise_rate > 0.0 && noise_events.empty())
      throw std::invalid_argument("grammar: noise_rate > 0 but no noise events defined");
    for (const auto& [name, pool] : pools)
      if (pool.empty()) throw std::invalid_argument("grammar: pool '" + name + "' is empty");
    for (const auto& topic : topics) {
      if (topic.tracks.empty())
        throw std::invalid_argument("grammar: topic '" + topic.name + "' has no tracks");
      double p = 0.0;
      for (const auto& track : topic.tracks) {
        p += track.prob;
        if (track.stages.empty())
          throw std::invalid_argument("grammar: track '" + topic.name + "." + track.name +
                                      "' has no stages");
        for (const auto& stage : track.stages) {
          if (stage.alternatives.empty())
            throw std::invalid_argument("grammar: empty stage in '" + topic.name + "." +
                                        track.name + "'");
          for (const auto& tpl : stage.alternatives) check_template(tpl);
        }
      }
      if (std::abs(p - 1.0) > 1e-9)
        throw std::invalid_argument("grammar: track probabilities of topic '" + topic.name +
                                    "' sum to " + std::to_string(p) + ", expected 1");
    }
    for (const auto& tpl : noise_events) check_template(tpl);
  }

 private:
  void check_template(const EventTemplate& tpl) const {
    for (const std::string* s : {&tpl.verb, &tpl.subject, &tpl.object, &tpl.preposition}) {
      if (s->empty()) throw std::invalid_argument("grammar: empty template slot");
      if ((*s)[0] == '$' && !pools.count(s->substr(1)))
        throw std::invalid_argument("grammar: unknown pool '" + s->substr(1) + "'");
    }
  }
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

inline std::string resolve_slot(const std::string& slot, const SyntheticGrammar& g,
                                std::mt19937_64& rng) {
  if (slot.empty() || slot[0] != '$') return slot;
  const auto& pool = g.pools.at(slot.substr(1));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

inline EventTuple instantiate(const EventTemplate& tpl, const SyntheticGrammar& g,
                              std::mt19937_64& rng) {
  return {resolve_slot(tpl.verb, g, rng), resolve_slot(tpl.subject, g, rng),
          resolve_slot(tpl.object, g, rng), resolve_slot(tpl.preposition, g, rng)};
}

}  // namespace detail

inline Corpus generate_synthetic_corpus(const SyntheticGrammar& grammar, std::size_t n,
                                        std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_synthetic_corpus: n must be positive");
  grammar.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Corpus corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick_topic(0, grammar.topics.size() - 1);
    const Topic& topic = grammar.topics[pick_topic(rng)];
    double r = unif(rng), acc = 0.0;
    const Track* track = &topic.tracks.back();
    for (const auto& t : topic.tracks) {
      acc += t.prob;
      if (r < acc) {
        track = &t;
        break;
      }
    }
    EventSequence seq;
    seq.source_id = topic.name + "." + track->name + "." + std::to_string(i);
    for (const auto& stage : track->stages) {
      std::uniform_int_distribution<std::size_t> pick_alt(0, stage.alternatives.size() - 1);
      seq.events.push_back(detail::instantiate(stage.alternatives[pick_alt(rng)], grammar, rng));
      if (grammar.noise_rate > 0.0 && unif(rng) < grammar.noise_rate) {
        std::uniform_int_distribution<std::size_t> pick_noise(0, grammar.noise_events.size() - 1);
        seq.events.push_back(detail::instantiate(grammar.noise_events[pick_noise(rng)], grammar, rng));
      }
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

// Ground-truth labels recovered from a synthetic source id.
inline std::pair<std::string, std::string> synthetic_label(const EventSequence& seq) {
  const auto a = seq.source_id.find('.');
  const auto b = seq.source_id.find('.', a + 1);
  if (a == std::string::npos || b == std::string::npos)
    throw std::invalid_argument("synthetic_label: source id '" + seq.source_id +
                                "' is not topic.track.index");
  return {seq.source_id.substr(0, a), seq.source_id.substr(a + 1, b - a - 1)};
}

// ---------------------------------------------------------------------------
// Grammar file parsing / writing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline EventTemplate parse_template(const std::string& spec, std::size_t line_no) {
  auto slots = split(spec, '|');
  if (slots.size() != 4)
    throw std::runtime_error("grammar line " + std::to_string(line_no) + ": event '" + spec +
                             "' needs 4 slots");
  return {slots[0], slots[1], slots[2], slots[3]};
}

}  // namespace detail

inline SyntheticGrammar read_grammar(std::istream& in) {
  SyntheticGrammar g;
  std::string line;
  std::size_t line_no = 0;
  bool saw_format = false;
  Topic* topic = nullptr;
  Track* track = nullptr;
  Stage* stage = nullptr;
  bool in_noise = false;

  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error("grammar line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (!saw_format) {
      if (line != "format=1") fail("expected 'format=1' header, got '" + line + "'");
      saw_format = true;
      continue;
    }
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "noise_rate" || line.rfind("noise_rate=", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("noise_rate needs '='");
      g.noise_rate = std::stod(detail::trim(line.substr(eq + 1)));
    } else if (word == "pool") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("pool needs '= tok1,tok2,...'");
      std::string name = detail::trim(line.substr(5, eq - 5));
      g.pools[name] = detail::split(line.substr(eq + 1), ',');
    } else if (word == "begin") {
      std::string kind;
      ls >> kind;
      if (kind == "topic") {
        if (topic) fail("nested topic");
        std::string name;
        ls >> name;
        if (name.empty()) fail("topic needs a name");
        g.topics.push_back(Topic{name, {}});
        topic = &g.topics.back();
      } else if (kind == "track") {
        if (!topic || track) fail("track outside topic");
        std::string name, probkv;
        ls >> name >> probkv;
        if (name.empty() || probkv.rfind("prob=", 0) != 0) fail("track needs name and prob=");
        topic->tracks.push_back(Track{name, std::stod(probkv.substr(5)), {}});
        track = &topic->tracks.back();
      } else if (kind == "stage") {
        if (!track) fail("stage outside track");
        track->stages.push_back(Stage{});
        stage = &track->stages.back();
      } else if (kind == "noise") {
        if (topic) fail("noise block inside topic");
        in_noise = true;
      } else {
        fail("unknown section '" + kind + "'");
      }
    } else if (word == "end") {
      std::string kind;
      ls >> kind;
      if (kind == "stage" && stage) stage = nullptr;
      else if (kind == "track" && track && !stage) track = nullptr;
      else if (kind == "topic" && topic && !track) topic = nullptr;
      else if (kind == "noise" && in_noise) in_noise = false;
      else fail("mismatched 'end " + kind + "'");
    } else if (word == "event") {
      const std::string spec = detail::trim(line.substr(5));
      if (stage) stage->alternatives.push_back(detail::parse_template(spec, line_no));
      else if (in_noise) g.noise_events.push_back(detail::parse_template(spec, line_no));
      else fail("event outside stage or noise block");
    } else {
      fail("unrecognized directive '" + word + "'");
    }
  }
  if (!saw_format) throw std::runtime_error("grammar: missing 'format=1' header");
  if (topic || track || stage || in_noise) throw std::runtime_error("grammar: unclosed section");
  g.validate();
  return g;
}

inline SyntheticGrammar read_grammar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_grammar: cannot open " + path);
  return read_grammar(in);
}

inline void write_grammar(const SyntheticGrammar& g, std::ostream& out) {
  out << "format=1\n";
  out << "noise_rate=" << g.noise_rate << "\n";
  for (const auto& [name, pool] : g.pools) {
    out << "pool " << name << " = ";
    for (std::size_t i = 0; i < pool.size(); ++i) out << (i ? "," : "") << pool[i];
    out << "\n";
  }
  auto emit = [&out](const EventTemplate& t, const char* indent) {
    out << indent << "event " << t.verb << '|' << t.subject << '|' << t.object << '|'
        << t.preposition << "\n";
  };
  if (!g.noise_events.empty()) {
    out << "begin noise\n";
    for (const auto& t : g.noise_events) emit(t, "  ");
    out << "end noise\n";
  }
  for (const auto& topic : g.topics) {
    out << "begin topic " << topic.name << "\n";
    for (const auto& track : topic.tracks) {
      out << "  begin track " << track.name << " prob=" << track.prob << "\n";
      for (const auto& stage : track.stages) {
        out << "    begin stage\n";
        for (const auto& t : stage.alternatives) emit(t, "      ");
        out << "    end stage\n";
      }
      out << "  end track\n";
    }
    out << "end topic\n";
  }
}

inline void write_grammar(const SyntheticGrammar& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_grammar: cannot open " + path);
  write_grammar(g, out);
}

// ---------------------------------------------------------------------------
// Default grammar: 4 topics x 2 tracks x 6 stages, 3 alternatives per stage,
// 5% noise-event rate.
// ---------------------------------------------------------------------------

inline const char* default_grammar_text() {
  return R"grm(format=1
noise_rate=0.05
pool crowd = residents,witnesses,bystanders
pool press = reporters,journalists,media
pool court = lawyers,prosecutors,attorneys
pool voters = voters,supporters,citizens
begin noise
  event noticed|$crowd|commotion|near
  event described|$press|scene|null
  event recalled|someone|detail|null
end noise
begin topic fire
  begin track forest prob=0.5
    begin stage
      event reported|$crowd|fire|null
      event spotted|ranger|smoke|above
      event called|$crowd|department|null
    end stage
    begin stage
      event spread|fire|forest|to
      event burned|fire|acres|null
      event jumped|blaze|ridge|over
    end stage
    begin stage
      event dropped|planes|water|from
      event dug|crews|firelines|null
      event evacuated|rangers|campers|from
    end stage
    begin stage
      event destroyed|fire|cabins|null
      event scorched|blaze|hillside|null
      event threatened|fire|wildlife|null
    end stage
    begin stage
      event contained|crews|blaze|null
      event slowed|rain|fire|null
      event held|firelines|flames|null
    end stage
    begin stage
      event surveyed|officials|damage|null
      event replanted|volunteers|trees|null
      event reopened|rangers|trails|null
    end stage
  end track
  begin track neighborhood prob=0.5
    begin stage
      event reported|$crowd|fire|null
      event smelled|$crowd|smoke|null
      event pulled|$crowd|alarm|null
    end stage
    begin stage
      event spread|fire|neighborhood|in
      event engulfed|flames|house|null
      event filled|smoke|street|null
    end stage
    begin stage
      event arrived|engines|scene|at
      event raised|firefighters|ladders|null
      event rescued|firefighters|family|from
    end stage
    begin stage
      event damaged|fire|building|null
      event collapsed|roof|house|of
      event gutted|flames|apartment|null
    end stage
    begin stage
      event doused|firefighters|flames|null
      event controlled|crews|blaze|null
      event checked|crews|hotspots|for
    end stage
    begin stage
      event sheltered|redcross|families|null
      event inspected|officials|ruins|null
      event rebuilt|owners|homes|null
    end stage
  end track
end topic
begin topic trial
  begin track dismissed prob=0.5
    begin stage
      event arrested|police|suspect|null
      event charged|prosecutors|suspect|with
      event detained|officers|suspect|null
    end stage
    begin stage
      event denied|suspect|charges|null
      event hired|suspect|lawyer|null
      event protested|suspect|innocence|null
    end stage
    begin stage
      event filed|$court|motion|null
      event challenged|$court|evidence|null
      event questioned|$court|witness|null
    end stage
    begin stage
      event wavered|witness|testimony|in
      event recanted|witness|statement|null
      event contradicted|witness|account|null
    end stage
    begin stage
      event dismissed|judge|lawsuit|null
      event dropped|prosecutors|charges|null
      event threw|judge|case|out
    end stage
    begin stage
      event walked|suspect|free|null
      event thanked|suspect|jury|null
      event sued|suspect|city|null
    end stage
  end track
  begin track convicted prob=0.5
    begin stage
      event arrested|police|suspect|null
      event charged|prosecutors|suspect|with
      event indicted|jury|suspect|null
    end stage
    begin stage
      event pleaded|suspect|guilty|null
      event confessed|suspect|crime|to
      event admitted|suspect|guilt|null
    end stage
    begin stage
      event presented|$court|evidence|null
      event testified|witness|court|in
      event showed|$court|records|null
    end stage
    begin stage
      event deliberated|jury|verdict|on
      event weighed|jury|evidence|null
      event reviewed|jury|testimony|null
    end stage
    begin stage
      event convicted|jury|suspect|null
      event found|jury|suspect|guilty
      event returned|jury|verdict|null
    end stage
    begin stage
      event sentenced|judge|suspect|to
      event imposed|judge|fine|null
      event ordered|judge|restitution|null
    end stage
  end track
end topic
begin topic election
  begin track victory prob=0.5
    begin stage
      event announced|candidate|campaign|null
      event entered|candidate|race|null
      event launched|candidate|bid|null
    end stage
    begin stage
      event promised|candidate|reform|null
      event outlined|candidate|platform|null
      event pledged|candidate|changes|null
    end stage
    begin stage
      event rallied|$voters|candidate|behind
      event cheered|$voters|speech|at
      event donated|$voters|money|null
    end stage
    begin stage
      event debated|candidate|rival|with
      event attacked|candidate|record|null
      event defended|candidate|plan|null
    end stage
    begin stage
      event won|candidate|election|null
      event carried|candidate|districts|null
      event swept|candidate|polls|null
    end stage
    begin stage
      event celebrated|$voters|victory|null
      event conceded|rival|defeat|null
      event claimed|candidate|mandate|null
    end stage
  end track
  begin track defeat prob=0.5
    begin stage
      event announced|candidate|campaign|null
      event entered|candidate|race|null
      event declared|candidate|candidacy|null
    end stage
    begin stage
      event promised|candidate|reform|null
      event courted|candidate|donors|null
      event toured|candidate|state|null
    end stage
    begin stage
      event slipped|candidate|polls|in
      event stumbled|candidate|debate|in
      event trailed|candidate|rival|behind
    end stage
    begin stage
      event criticized|$press|campaign|null
      event questioned|$press|record|null
      event doubted|$voters|promises|null
    end stage
    begin stage
      event lost|candidate|election|null
      event conceded|candidate|race|null
      event split|$voters|vote|null
    end stage
    begin stage
      event resigned|candidate|post|from
      event blamed|candidate|turnout|null
      event retired|candidate|politics|from
    end stage
  end track
end topic
begin topic storm
  begin track coastal prob=0.5
    begin stage
      event tracked|forecasters|hurricane|null
      event issued|forecasters|warning|null
      event predicted|forecasters|landfall|null
    end stage
    begin stage
      event boarded|$crowd|windows|up
      event stocked|$crowd|supplies|null
      event fled|$crowd|coast|from
    end stage
    begin stage
      event struck|storm|coast|null
      event battered|waves|seawall|null
      event surged|tide|harbor|into
    end stage
    begin stage
      event flooded|water|streets|null
      event toppled|winds|poles|null
      event cut|storm|power|null
    end stage
    begin stage
      event weakened|storm|inland|null
      event passed|hurricane|north|to
      event faded|winds|overnight|null
    end stage
    begin stage
      event assessed|crews|damage|null
      event restored|workers|power|null
      event repaired|crews|seawall|null
    end stage
  end track
  begin track mountain prob=0.5
    begin stage
      event forecast|meteorologists|blizzard|null
      event warned|forecasters|travelers|null
      event expected|forecasters|snowfall|null
    end stage
    begin stage
      event closed|officials|passes|null
      event salted|trucks|highways|null
      event canceled|schools|classes|null
    end stage
    begin stage
      event buried|snow|roads|null
      event stranded|drifts|motorists|null
      event whipped|winds|ridges|across
    end stage
    begin stage
      event rescued|patrols|hikers|null
      event plowed|crews|routes|null
      event sheltered|towns|travelers|null
    end stage
    begin stage
      event eased|storm|morning|by
      event cleared|skies|afternoon|in
      event stopped|snowfall|midnight|at
    end stage
    begin stage
      event reopened|officials|passes|null
      event melted|snow|valleys|in
      event counted|officials|losses|null
    end stage
  end track
end topic
)grm";
}

inline SyntheticGrammar default_grammar() {
  std::istringstream in(default_grammar_text());
  return read_grammar(in);
}

}  // namespace haqae

#endif  // HAQAE_GRAMMAR_HPP
