#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "natlog/error.hpp"
#include "natlog/polarity.hpp"
#include "natlog/relation.hpp"

namespace natlog {

/// Word taxonomy with gold lexical relations.
///
/// Words form a forest. A child is a hyponym of its parent (child ⊏ parent).
/// A node's children are split into groups: members of a disjoint group are
/// mutually exclusive (|), members of an overlapping group are independent (#),
/// and members of different groups of the same parent are independent. Words
/// under different roots are disjoint. Synonyms share a node.
class Lexicon {
 public:
  struct Group {
    bool disjoint = true;
    std::vector<std::string> members;
  };

  /// Add `word` under `parent` ("" for a root) in child group `group`.
  void add(const std::string& word, const std::string& parent = "", std::size_t group = 0,
           bool disjoint_group = true) {
    if (node_of_.count(word)) throw ContractViolation("lexicon: duplicate word '" + word + "'");
    const std::size_t id = nodes_.size();
    nodes_.push_back({word, {word}, std::nullopt, 0, {}});
    node_of_[word] = id;
    if (!parent.empty()) {
      const std::size_t p = node_id(parent);
      nodes_[id].parent = p;
      nodes_[id].group = group;
      auto& groups = nodes_[p].groups;
      if (groups.size() <= group) groups.resize(group + 1);
      groups[group].disjoint = disjoint_group;
      groups[group].members.push_back(word);
    }
  }

  void add_synonym(const std::string& word, const std::string& synonym) {
    const std::size_t id = node_id(word);
    if (node_of_.count(synonym)) throw ContractViolation("lexicon: duplicate word '" + synonym + "'");
    node_of_[synonym] = id;
    nodes_[id].forms.push_back(synonym);
  }

  bool contains(const std::string& w) const { return node_of_.count(w) != 0; }

  /// Gold relation of `x` to `y`, as a premise word replaced by a hypothesis word.
  Relation relation(const std::string& x, const std::string& y) const {
    const std::size_t a = node_id(x), b = node_id(y);
    if (a == b) return Relation::Equivalence;
    if (is_ancestor(b, a)) return Relation::ForwardEntailment;
    if (is_ancestor(a, b)) return Relation::ReverseEntailment;
    // Children of the lowest common ancestor on the paths to a and b.
    std::optional<std::size_t> ca, cb;
    for (std::size_t u = a; nodes_[u].parent && !ca; u = *nodes_[u].parent)
      for (std::size_t v = b; nodes_[v].parent; v = *nodes_[v].parent)
        if (*nodes_[u].parent == *nodes_[v].parent) {
          ca = u;
          cb = v;
          break;
        }
    if (!ca) return Relation::Alternation;  // different roots
    const auto& na = nodes_[*ca];
    const auto& nb = nodes_[*cb];
    if (na.group != nb.group) return Relation::Independence;
    return nodes_[*na.parent].groups[na.group].disjoint ? Relation::Alternation : Relation::Independence;
  }

  /// Every word (all surface forms).
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      for (const auto& f : n.forms) out.push_back(f);
    return out;
  }

  /// Words `y` in the same tree as `x` with relation(x, y) == r, in insertion order.
  std::vector<std::string> related(const std::string& x, Relation r) const {
    std::vector<std::string> out;
    const std::size_t rx = root(node_id(x));
    for (const auto& n : nodes_)
      for (const auto& f : n.forms)
        if (f != x && root(node_id(f)) == rx && relation(x, f) == r) out.push_back(f);
    return out;
  }

 private:
  struct Node {
    std::string name;
    std::vector<std::string> forms;
    std::optional<std::size_t> parent;
    std::size_t group = 0;
    std::vector<Group> groups;
  };

  std::size_t node_id(const std::string& w) const {
    auto it = node_of_.find(w);
    if (it == node_of_.end()) throw ValidationError("word '" + w + "' is not in the lexicon");
    return it->second;
  }
  bool is_ancestor(std::size_t anc, std::size_t x) const {
    for (auto p = nodes_[x].parent; p; p = nodes_[*p].parent)
      if (*p == anc) return true;
    return false;
  }
  std::size_t root(std::size_t x) const {
    while (nodes_[x].parent) x = *nodes_[x].parent;
    return x;
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> node_of_;
};

/// Word lists and taxonomies used by the generator.
struct Vocabularies {
  Lexicon subjects;        ///< subject nouns
  Lexicon objects;         ///< object nouns
  Lexicon intransitive;    ///< verbs without an object
  Lexicon transitive;      ///< verbs taking an object
  std::vector<std::string> quantifiers;
  std::vector<std::string> adjectives;
  std::vector<std::string> modifiers;
  std::vector<std::string> adverbs;

  ControlledGrammar grammar() const {
    ControlledGrammar g;
    for (const auto& w : subjects.words()) g.nouns.insert(w);
    for (const auto& w : objects.words()) g.nouns.insert(w);
    for (const auto& w : intransitive.words()) g.verbs.insert(w);
    for (const auto& w : transitive.words()) g.verbs.insert(w);
    g.adjectives.insert(adjectives.begin(), adjectives.end());
    g.modifiers.insert(modifiers.begin(), modifiers.end());
    g.adverbs.insert(adverbs.begin(), adverbs.end());
    return g;
  }

  std::vector<std::string> all_words() const {
    std::vector<std::string> out{"all", "some", "no", "the", "a", "an", "are", "is"};
    for (const auto* lex : {&subjects, &objects, &intransitive, &transitive})
      for (const auto& w : lex->words()) out.push_back(w);
    for (const auto* list : {&adjectives, &modifiers, &adverbs}) out.insert(out.end(), list->begin(), list->end());
    return out;
  }
};

/// The built-in desk-scale lexicon.
inline Vocabularies default_vocabularies() {
  Vocabularies v;
  auto& s = v.subjects;
  s.add("creatures");
  s.add("animals", "creatures");
  s.add("mammals", "animals");
  s.add("birds", "animals");
  s.add("reptiles", "animals");
  s.add("cats", "mammals");
  s.add("dogs", "mammals");
  s.add("horses", "mammals");
  s.add("rabbits", "mammals");
  s.add_synonym("rabbits", "bunnies");
  s.add("kittens", "cats");
  s.add("puppies", "dogs");
  s.add("poodles", "dogs");
  s.add("sparrows", "birds");
  s.add("crows", "birds");
  s.add("parrots", "birds");
  s.add("snakes", "reptiles");
  s.add("lizards", "reptiles");
  s.add("turtles", "reptiles");
  s.add("people");
  s.add("children", "people", 0, true);
  s.add_synonym("children", "kids");
  s.add("adults", "people", 0, true);
  s.add("students", "people", 1, false);
  s.add("musicians", "people", 1, false);
  s.add("dancers", "people", 1, false);
  s.add("boys", "children");
  s.add("girls", "children");

  auto& o = v.objects;
  o.add("food");
  o.add("fruit", "food");
  o.add("meat", "food");
  o.add("vegetables", "food");
  o.add("apples", "fruit");
  o.add("pears", "fruit");
  o.add("bananas", "fruit");
  o.add("beef", "meat");
  o.add("pork", "meat");
  o.add("carrots", "vegetables");
  o.add("beans", "vegetables");
  o.add("things");
  o.add("toys", "things");
  o.add("balls", "toys");
  o.add("dolls", "toys");
  o.add("books", "things");
  o.add_synonym("books", "novels");
  o.add("gifts", "things", 1, false);
  o.add("boxes", "things", 2, false);

  auto& iv = v.intransitive;
  iv.add("move");
  iv.add("run", "move");
  iv.add("walk", "move");
  iv.add("swim", "move");
  iv.add("sprint", "run");
  iv.add("jog", "run");
  iv.add("stroll", "walk");
  iv.add("rest");
  iv.add("sleep", "rest");
  iv.add_synonym("sleep", "slumber");
  iv.add("nap", "sleep");
  iv.add("sit", "rest", 1, false);

  auto& tv = v.transitive;
  tv.add("touch");
  tv.add("hold", "touch");
  tv.add("grab", "hold");
  tv.add("carry", "hold", 1, false);
  tv.add("consume");
  tv.add("eat", "consume");
  tv.add("devour", "eat");
  tv.add("nibble", "eat");
  tv.add("see");
  tv.add("watch", "see");
  tv.add_synonym("watch", "observe");
  tv.add("notice", "see", 1, false);

  v.quantifiers = {"all", "some", "no", "the"};
  v.adjectives = {"black", "white", "small", "big", "young", "old", "happy", "red"};
  v.modifiers = {"outside", "nearby", "indoors"};
  v.adverbs = {"quickly", "slowly", "quietly", "happily"};
  return v;
}

}  // namespace natlog
