#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/error.hpp"
#include "natlog/lexicon.hpp"
#include "natlog/polarity.hpp"
#include "natlog/prover.hpp"
#include "natlog/relation.hpp"
#include "natlog/training.hpp"

namespace natlog {

/// Slots of the generator's sentence template:
///   Quantifier [Adj] Noun [Modifier] Verb [[Adj] Object] [Adverb]
enum class Slot : std::uint8_t { Quantifier, SubjAdj, SubjNoun, SubjMod, Verb, ObjAdj, ObjNoun, Adverb };
inline constexpr std::size_t kNumSlots = 8;

struct Frame {
  std::array<std::string, kNumSlots> words;
  bool transitive = false;

  std::string& operator[](Slot s) { return words[static_cast<std::size_t>(s)]; }
  const std::string& operator[](Slot s) const { return words[static_cast<std::size_t>(s)]; }

  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    for (const auto& w : words)
      if (!w.empty()) out.push_back(w);
    return out;
  }

  /// Token index of a filled slot.
  std::size_t index_of(Slot s) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(s); ++i) k += !words[i].empty();
    return k;
  }

  bool has_duplicates() const {
    auto t = tokens();
    std::sort(t.begin(), t.end());
    return std::adjacent_find(t.begin(), t.end()) != t.end();
  }
};

struct Edit {
  EditType type = EditType::Substitution;
  std::size_t lo = 0, hi = 0;  ///< hypothesis token span; empty for a deletion
  Relation relation = Relation::Equivalence;  ///< lexical relation, premise word to hypothesis word
  std::string context;                        ///< context label of the edited token
  std::size_t position = 0;                   ///< hypothesis position where the edit is aggregated
  bool operator==(const Edit&) const = default;
};

struct Example {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  NliLabel label = NliLabel::Entailment;
  std::vector<Relation> aggregation;  ///< running relation after each hop
  std::vector<Edit> edits;            ///< in hypothesis order
  std::optional<std::pair<Frame, Frame>> frames;  ///< generator state, not serialised

  bool operator==(const Example& o) const {
    return premise == o.premise && hypothesis == o.hypothesis && label == o.label &&
           aggregation == o.aggregation && edits == o.edits;
  }

  std::size_t hops() const noexcept { return edits.size(); }

  /// Gold relation after every hypothesis position.
  std::vector<Relation> gold_path() const {
    std::vector<Relation> lex;
    std::vector<Projectivity> ctx;
    std::vector<std::size_t> pos;
    for (const auto& e : edits) {
      lex.push_back(e.relation);
      ctx.push_back(parse_context(e.context));
      pos.push_back(e.position);
    }
    return prove(lex, ctx, pos).trajectory(hypothesis.size());
  }

  /// "up" when every edit sits in an upward context, "down" when every edit sits
  /// in a downward one, "mixed" otherwise ("none" for an edit-free pair).
  std::string direction() const {
    if (edits.empty()) return "none";
    bool up = true, down = true;
    for (const auto& e : edits) {
      const auto rho = parse_context(e.context);
      up = up && is_upward(rho);
      down = down && is_downward(rho);
    }
    return up ? "up" : down ? "down" : "mixed";
  }
};

// ---------------------------------------------------------------------------
// Generation

struct GeneratorOptions {
  std::vector<EditType> edit_types{EditType::Insertion, EditType::Deletion, EditType::Substitution};
  double optional_slot_rate = 0.3;
  /// Keep only examples with this direction ("up", "down"); empty keeps all.
  std::string direction;
};

class Generator {
 public:
  explicit Generator(Vocabularies vocab) : v_(std::move(vocab)), grammar_(v_.grammar()) {}

  const Vocabularies& vocabularies() const noexcept { return v_; }
  const ControlledGrammar& grammar() const noexcept { return grammar_; }

  Frame sample_frame(std::mt19937_64& rng, double rate) const {
    for (;;) {
      Frame f;
      f[Slot::Quantifier] = pick(v_.quantifiers, rng);
      f[Slot::SubjNoun] = pick(v_.subjects.words(), rng);
      if (chance(rng, rate)) f[Slot::SubjAdj] = pick(v_.adjectives, rng);
      if (chance(rng, rate)) f[Slot::SubjMod] = pick(v_.modifiers, rng);
      f.transitive = chance(rng, 0.5);
      if (f.transitive) {
        f[Slot::Verb] = pick(v_.transitive.words(), rng);
        f[Slot::ObjNoun] = pick(v_.objects.words(), rng);
        if (chance(rng, rate)) f[Slot::ObjAdj] = pick(v_.adjectives, rng);
      } else {
        f[Slot::Verb] = pick(v_.intransitive.words(), rng);
      }
      if (chance(rng, rate)) f[Slot::Adverb] = pick(v_.adverbs, rng);
      if (!f.has_duplicates()) return f;
    }
  }

  /// One-edit example. Throws ValidationError when the lexicon cannot supply the edit.
  Example make_1hop(EditType type, std::mt19937_64& rng, double rate = 0.3) const {
    Frame premise = sample_frame(rng, rate);
    Frame hypothesis = premise;
    Edit e;
    e.type = type;
    switch (type) {
      case EditType::Insertion: {
        auto slots = empty_modifier_slots(premise);
        if (slots.empty()) throw ValidationError("no free slot for an insertion");
        const Slot s = pick(slots, rng);
        hypothesis[s] = pick(words_for(s), rng);
        if (hypothesis.has_duplicates()) throw ValidationError("insertion repeats a word");
        e.position = hypothesis.index_of(s);
        e.lo = e.position;
        e.hi = e.position + 1;
        e.relation = Relation::ReverseEntailment;
        e.context = context_at(hypothesis.tokens(), e.position);
        break;
      }
      case EditType::Deletion: {
        auto slots = empty_modifier_slots(premise);
        if (slots.empty()) throw ValidationError("no free slot for a deletion");
        const Slot s = pick(slots, rng);
        premise[s] = pick(words_for(s), rng);
        if (premise.has_duplicates()) throw ValidationError("deletion source repeats a word");
        const std::size_t at = premise.index_of(s);
        e.position = std::min(at, hypothesis.tokens().size() - 1);
        e.lo = e.hi = at;
        e.relation = Relation::ForwardEntailment;
        e.context = context_at(premise.tokens(), at);
        break;
      }
      case EditType::Substitution: {
        std::vector<Slot> slots{Slot::SubjNoun, Slot::Verb};
        if (premise.transitive) slots.push_back(Slot::ObjNoun);
        const Slot s = pick(slots, rng);
        const auto [word, rel] = substitute(lexicon_for(premise, s), premise[s], false, rng);
        hypothesis[s] = word;
        if (hypothesis.has_duplicates()) throw ValidationError("substitution repeats a word");
        e.position = hypothesis.index_of(s);
        e.lo = e.position;
        e.hi = e.position + 1;
        e.relation = rel;
        e.context = context_at(hypothesis.tokens(), e.position);
        break;
      }
    }
    Example ex;
    ex.premise = premise.tokens();
    ex.hypothesis = hypothesis.tokens();
    ex.edits = {e};
    ex.frames = std::make_pair(premise, hypothesis);
    finalize(ex);
    return ex;
  }

  /// Adds a noun substitution in the premise or the hypothesis at a noun that is
  /// not the first edit's token and not aggregated at an existing edit position.
  Example add_hop(const Example& base, std::mt19937_64& rng) const {
    if (!base.frames) throw ContractViolation("add_hop needs a generated example");
    auto [premise, hypothesis] = *base.frames;
    std::vector<Slot> slots;
    for (Slot s : {Slot::SubjNoun, Slot::ObjNoun}) {
      if (s == Slot::ObjNoun && !premise.transitive) continue;
      if (premise[s] != hypothesis[s]) continue;  // already edited
      const std::size_t pos = hypothesis.index_of(s);
      bool clash = false;
      for (const auto& e : base.edits) clash = clash || e.position == pos;
      if (!clash) slots.push_back(s);
    }
    if (slots.empty()) throw ValidationError("no eligible noun for a second edit");
    const Slot s = pick(slots, rng);
    const bool in_premise = chance(rng, 0.5);
    const auto [word, rel] = substitute(lexicon_for(premise, s), premise[s], in_premise, rng);
    (in_premise ? premise : hypothesis)[s] = word;
    if (premise.has_duplicates() || hypothesis.has_duplicates())
      throw ValidationError("second edit repeats a word");

    Example ex;
    ex.premise = premise.tokens();
    ex.hypothesis = hypothesis.tokens();
    ex.edits = base.edits;
    Edit e;
    e.type = EditType::Substitution;
    e.position = hypothesis.index_of(s);
    e.lo = e.position;
    e.hi = e.position + 1;
    e.relation = rel;
    e.context = context_at(ex.hypothesis, e.position);
    ex.edits.push_back(e);
    std::stable_sort(ex.edits.begin(), ex.edits.end(),
                     [](const Edit& a, const Edit& b) { return a.position < b.position; });
    ex.frames = std::make_pair(premise, hypothesis);
    finalize(ex);
    return ex;
  }

  /// `count` examples with `hops` edits each (1 or 2), fully determined by `seed`.
  std::vector<Example> generate(std::size_t count, std::size_t hops, std::uint64_t seed,
                                const GeneratorOptions& opts = {}) const {
    if (hops != 1 && hops != 2) throw ContractViolation("hops must be 1 or 2");
    if (opts.edit_types.empty()) throw ContractViolation("no edit types enabled");
    std::mt19937_64 rng(seed);
    std::vector<Example> out;
    std::size_t failures = 0;
    while (out.size() < count) {
      try {
        const EditType type = pick(opts.edit_types, rng);
        Example ex = make_1hop(type, rng, opts.optional_slot_rate);
        if (hops == 2) ex = add_hop(ex, rng);
        if (!opts.direction.empty() && ex.direction() != opts.direction) continue;
        out.push_back(std::move(ex));
        failures = 0;
      } catch (const ValidationError&) {
        if (++failures > 10000) throw ValidationError("generator cannot satisfy the requested options");
      }
    }
    return out;
  }

  /// Symbolic re-derivation from the surface sentences alone: diff, lexicon
  /// relations, polarity marking, then the fold. Throws ValidationError on mismatch.
  void recheck(const Example& ex) const {
    const auto edits = diff_edits(ex.premise, ex.hypothesis,
                                  [this](const std::string& a, const std::string& b) {
                                    return same_class(a, b);
                                  });
    if (edits.size() != ex.edits.size())
      throw ValidationError("re-derivation found " + std::to_string(edits.size()) + " edits, example has " +
                            std::to_string(ex.edits.size()));
    const auto p = mark_polarity(ex.premise, grammar_);
    const auto h = mark_polarity(ex.hypothesis, grammar_);
    std::vector<Relation> lex;
    std::vector<Projectivity> ctx;
    std::vector<std::size_t> pos;
    for (std::size_t k = 0; k < edits.size(); ++k) {
      const auto& d = edits[k];
      if (d.type != ex.edits[k].type || d.position != ex.edits[k].position)
        throw ValidationError("edit " + std::to_string(k) + " does not match the sentence diff");
      switch (d.type) {
        case EditType::Insertion: lex.push_back(Relation::ReverseEntailment); break;
        case EditType::Deletion: lex.push_back(Relation::ForwardEntailment); break;
        case EditType::Substitution:
          lex.push_back(word_relation(ex.premise[*d.premise_index], ex.hypothesis[*d.hypothesis_index]));
          break;
      }
      ctx.push_back(d.type == EditType::Deletion ? p.projectivities[*d.premise_index]
                                                 : h.projectivities[d.position]);
      pos.push_back(d.position);
    }
    const Proof proof = prove(lex, ctx, pos);
    std::vector<Relation> states;
    for (const auto& s : proof.steps) states.push_back(s.state);
    if (states != ex.aggregation) throw ValidationError("gold aggregation disagrees with re-derivation");
    if (proof.label != ex.label) throw ValidationError("gold label disagrees with re-derivation");
  }

  /// Lexical relation between two words of the same class.
  Relation word_relation(const std::string& a, const std::string& b) const {
    for (const auto* lex : {&v_.subjects, &v_.objects, &v_.intransitive, &v_.transitive})
      if (lex->contains(a) && lex->contains(b)) return lex->relation(a, b);
    throw ValidationError("no lexical relation between '" + a + "' and '" + b + "'");
  }

  bool same_class(const std::string& a, const std::string& b) const {
    for (const auto* lex : {&v_.subjects, &v_.objects, &v_.intransitive, &v_.transitive})
      if (lex->contains(a) && lex->contains(b)) return true;
    return false;
  }

  /// Model input for an example: the hypothesis is polarity-marked with the grammar.
  LabeledInput to_input(const Example& ex) const {
    return {ModelInput{ex.premise, mark_polarity(ex.hypothesis, grammar_)}, ex.label};
  }

 private:
  template <class C>
  static const typename C::value_type& pick(const C& items, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
    return items[d(rng)];
  }
  static bool chance(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

  std::vector<Slot> empty_modifier_slots(const Frame& f) const {
    std::vector<Slot> out;
    for (Slot s : {Slot::SubjAdj, Slot::SubjMod, Slot::ObjAdj, Slot::Adverb}) {
      if (s == Slot::ObjAdj && !f.transitive) continue;
      if (f[s].empty()) out.push_back(s);
    }
    return out;
  }

  const std::vector<std::string>& words_for(Slot s) const {
    switch (s) {
      case Slot::SubjAdj:
      case Slot::ObjAdj: return v_.adjectives;
      case Slot::SubjMod: return v_.modifiers;
      default: return v_.adverbs;
    }
  }

  const Lexicon& lexicon_for(const Frame& f, Slot s) const {
    switch (s) {
      case Slot::SubjNoun: return v_.subjects;
      case Slot::ObjNoun: return v_.objects;
      default: return f.transitive ? v_.transitive : v_.intransitive;
    }
  }

  /// Picks a relation from {≡,⊏,⊐,|,#} and a word in that relation to `word`.
  /// With `reverse`, the new word replaces the premise side, so the returned
  /// relation is relation(new, word).
  std::pair<std::string, Relation> substitute(const Lexicon& lex, const std::string& word, bool reverse,
                                              std::mt19937_64& rng) const {
    std::vector<Relation> rels{Relation::Equivalence, Relation::ForwardEntailment, Relation::ReverseEntailment,
                               Relation::Alternation, Relation::Independence};
    std::shuffle(rels.begin(), rels.end(), rng);
    for (Relation r : rels) {
      std::vector<std::string> cands;
      for (const auto& w : lex.words())
        if (w != word && (reverse ? lex.relation(w, word) : lex.relation(word, w)) == r) cands.push_back(w);
      if (!cands.empty()) return {pick(cands, rng), r};
    }
    throw ValidationError("lexicon has no substitute for '" + word + "'");
  }

  std::string context_at(const std::vector<std::string>& tokens, std::size_t i) const {
    return mark_polarity(tokens, grammar_).contexts.at(i);
  }

  void finalize(Example& ex) const {
    std::vector<Relation> lex;
    std::vector<Projectivity> ctx;
    std::vector<std::size_t> pos;
    for (const auto& e : ex.edits) {
      lex.push_back(e.relation);
      ctx.push_back(parse_context(e.context));
      pos.push_back(e.position);
    }
    const Proof proof = prove(lex, ctx, pos);
    ex.aggregation.clear();
    for (const auto& s : proof.steps) ex.aggregation.push_back(s.state);
    ex.label = proof.label;
  }

  Vocabularies v_;
  ControlledGrammar grammar_;
};

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::json to_json(const Example& ex) {
  nlohmann::json edits = nlohmann::json::array();
  for (const auto& e : ex.edits)
    edits.push_back({{"span", {e.lo, e.hi}},
                     {"type", std::string(to_string(e.type))},
                     {"relation", std::string(to_token(e.relation))},
                     {"context", e.context},
                     {"position", e.position}});
  std::vector<std::string> agg;
  for (Relation r : ex.aggregation) agg.emplace_back(to_token(r));
  return {{"premise", join_words(ex.premise)},
          {"hypothesis", join_words(ex.hypothesis)},
          {"label", std::string(to_string(ex.label))},
          {"aggregation", agg},
          {"edits", edits}};
}

/// Parses and validates one example: schema, spans, and the fold of the edits
/// reproducing both the aggregation and the label.
inline Example example_from_json(const nlohmann::json& j) {
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
  };
  if (!j.is_object()) throw ValidationError("line is not a JSON object");
  Example ex;
  ex.premise = split_words(str("premise"));
  ex.hypothesis = split_words(str("hypothesis"));
  if (ex.premise.empty() || ex.hypothesis.empty()) throw ValidationError("empty sentence");
  ex.label = parse_label(str("label"));
  if (!j.contains("aggregation") || !j["aggregation"].is_array()) throw ValidationError("missing array 'aggregation'");
  if (!j.contains("edits") || !j["edits"].is_array()) throw ValidationError("missing array 'edits'");
  for (const auto& r : j["aggregation"]) {
    if (!r.is_string()) throw ValidationError("aggregation entries must be relation tokens");
    ex.aggregation.push_back(parse_relation(r.get<std::string>()));
  }
  for (const auto& je : j["edits"]) {
    if (!je.is_object()) throw ValidationError("edit is not an object");
    Edit e;
    if (!je.contains("span") || !je["span"].is_array() || je["span"].size() != 2)
      throw ValidationError("edit span must be [lo, hi]");
    e.lo = je["span"][0].get<std::size_t>();
    e.hi = je["span"][1].get<std::size_t>();
    e.type = parse_edit_type(je.at("type").get<std::string>());
    e.relation = parse_relation(je.at("relation").get<std::string>());
    e.context = je.value("context", std::string("none"));
    parse_context(e.context);
    e.position = je.value("position", e.lo);
    if (e.lo > e.hi || e.hi > ex.hypothesis.size()) throw ValidationError("edit span outside the hypothesis");
    if (e.position >= ex.hypothesis.size()) throw ValidationError("edit position outside the hypothesis");
    if ((e.type == EditType::Deletion) != (e.lo == e.hi))
      throw ValidationError("only deletions have an empty span");
    ex.edits.push_back(e);
  }
  if (ex.aggregation.size() != ex.edits.size())
    throw ValidationError("aggregation has " + std::to_string(ex.aggregation.size()) + " entries for " +
                          std::to_string(ex.edits.size()) + " hops");
  for (std::size_t k = 1; k < ex.edits.size(); ++k)
    if (ex.edits[k].position < ex.edits[k - 1].position) throw ValidationError("edits are not in hypothesis order");
  Relation state = Relation::Equivalence;
  for (std::size_t k = 0; k < ex.edits.size(); ++k) {
    state = join(state, project(parse_context(ex.edits[k].context), ex.edits[k].relation));
    if (state != ex.aggregation[k])
      throw ValidationError("aggregation step " + std::to_string(k + 1) + " disagrees with the edits");
  }
  if (label_of(state) != ex.label) throw ValidationError("label is inconsistent with the final aggregation");
  return ex;
}

inline void save_jsonl(const std::vector<Example>& data, std::ostream& out) {
  for (const auto& ex : data) out << to_json(ex).dump() << '\n';
}

inline void save_jsonl(const std::vector<Example>& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_jsonl(data, out);
}

/// Reads one example per non-empty line. Errors carry the 1-based line number.
inline std::vector<Example> load_jsonl(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_jsonl(in);
}

/// Counts per label, direction, edit type and hop count.
inline nlohmann::json label_report(const std::vector<Example>& data) {
  std::map<std::string, std::size_t> labels, directions, types, hops;
  for (const auto& ex : data) {
    ++labels[std::string(to_string(ex.label))];
    ++directions[ex.direction()];
    ++hops[std::to_string(ex.hops())];
    for (const auto& e : ex.edits) ++types[std::string(to_string(e.type))];
  }
  return {{"count", data.size()}, {"labels", labels}, {"directions", directions}, {"edit_types", types}, {"hops", hops}};
}

}  // namespace natlog
