#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/error.hpp"
#include "natlog/relation.hpp"

namespace natlog {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constituency trees over token indices

/// N-ary tree whose leaves are token indices. A node is a leaf iff it has no children.
struct ParseTree {
  std::size_t leaf = 0;
  std::vector<ParseTree> children;

  static ParseTree make_leaf(std::size_t i) { return ParseTree{i, {}}; }
  static ParseTree make_node(std::vector<ParseTree> kids) { return ParseTree{0, std::move(kids)}; }

  bool is_leaf() const noexcept { return children.empty(); }
  bool is_binary() const noexcept {
    if (is_leaf()) return true;
    if (children.size() != 2) return false;
    return children[0].is_binary() && children[1].is_binary();
  }

  void collect_leaves(std::vector<std::size_t>& out) const {
    if (is_leaf()) {
      out.push_back(leaf);
      return;
    }
    for (const auto& c : children) c.collect_leaves(out);
  }
  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    collect_leaves(out);
    return out;
  }

  std::size_t depth() const noexcept {
    std::size_t d = 0;
    for (const auto& c : children) d = std::max(d, c.depth() + 1);
    return d;
  }

  std::string to_string() const {
    if (is_leaf()) return std::to_string(leaf);
    std::string out = "(";
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (i) out += ' ';
      out += children[i].to_string();
    }
    return out + ")";
  }

  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

/// Parse a bracketed tree such as "(0 ((1 2) (3 4)))".
inline ParseTree parse_tree(std::string_view text) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("tree parse error at offset " + std::to_string(pos) + ": " + what);
  };
  std::function<ParseTree()> parse_node = [&]() -> ParseTree {
    skip_ws();
    if (pos >= text.size()) throw fail("unexpected end of input");
    if (text[pos] == '(') {
      ++pos;
      std::vector<ParseTree> kids;
      for (;;) {
        skip_ws();
        if (pos >= text.size()) throw fail("missing ')'");
        if (text[pos] == ')') {
          ++pos;
          break;
        }
        kids.push_back(parse_node());
      }
      if (kids.empty()) throw fail("empty constituent");
      return ParseTree::make_node(std::move(kids));
    }
    if (!std::isdigit(static_cast<unsigned char>(text[pos]))) throw fail("expected token index");
    std::size_t v = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
      v = v * 10 + static_cast<std::size_t>(text[pos++] - '0');
    return ParseTree::make_leaf(v);
  };
  ParseTree t = parse_node();
  skip_ws();
  if (pos != text.size()) throw fail("trailing characters");
  return t;
}

/// Leaves must be exactly 0..n-1 in order.
inline void validate_spans(const ParseTree& tree, std::size_t num_tokens) {
  const auto leaves = tree.leaves();
  if (leaves.size() != num_tokens)
    throw ValidationError("tree has " + std::to_string(leaves.size()) + " leaves for " +
                          std::to_string(num_tokens) + " tokens");
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (leaves[i] != i) throw ValidationError("tree leaves are not the token indices in order");
}

/// Right-branching binarisation: (A B C) -> (A (B C)). Unary chains are collapsed.
inline ParseTree binarize(const ParseTree& tree) {
  if (tree.is_leaf()) return tree;
  if (tree.children.size() == 1) return binarize(tree.children[0]);
  std::vector<ParseTree> kids;
  kids.reserve(tree.children.size());
  for (const auto& c : tree.children) kids.push_back(binarize(c));
  ParseTree acc = std::move(kids.back());
  for (std::size_t i = kids.size() - 1; i-- > 0;)
    acc = ParseTree::make_node({std::move(kids[i]), std::move(acc)});
  return acc;
}

inline ParseTree binarize(const ParseTree& tree, std::size_t num_tokens) {
  validate_spans(tree, num_tokens);
  return binarize(tree);
}

/// Flat root over n tokens; binarises to a right comb.
inline ParseTree flat_tree(std::size_t n) {
  if (n == 0) throw ContractViolation("flat_tree: no tokens");
  if (n == 1) return ParseTree::make_leaf(0);
  std::vector<ParseTree> kids;
  for (std::size_t i = 0; i < n; ++i) kids.push_back(ParseTree::make_leaf(i));
  return ParseTree::make_node(std::move(kids));
}

// ---------------------------------------------------------------------------
// Annotated sentences

struct AnnotatedSentence {
  std::vector<std::string> tokens;
  std::vector<Projectivity> projectivities;
  /// Context label per token ("all.arg1", "none", ...); "custom" for ingested rows.
  std::vector<std::string> contexts;
  std::optional<ParseTree> parse;

  std::size_t size() const noexcept { return tokens.size(); }

  void validate() const {
    if (projectivities.size() != tokens.size())
      throw ValidationError("projectivity count does not match token count");
    if (!contexts.empty() && contexts.size() != tokens.size())
      throw ValidationError("context count does not match token count");
    for (const auto& rho : projectivities)
      if (!rho.preserves_equivalence()) throw ValidationError("projectivity does not fix ≡");
    if (parse) {
      validate_spans(*parse, tokens.size());
      if (!parse->is_binary()) throw ValidationError("parse is not binary");
    }
  }
};

/// Word classes of the controlled grammar:
///   [Quantifier] Adjective* Noun [Modifier] [Auxiliary] Verb [Adjective* Noun] [Adverb]
/// Quantifier rows apply to the noun phrase (arg1) and to the verb phrase (arg2).
/// The determiners the/a/an behave like `some`.
struct ControlledGrammar {
  std::set<std::string> quantifiers{"all", "some", "no"};
  std::set<std::string> determiners{"the", "a", "an"};
  std::set<std::string> adjectives;
  std::set<std::string> nouns;
  std::set<std::string> modifiers;
  std::set<std::string> auxiliaries{"are", "is"};
  std::set<std::string> verbs;
  std::set<std::string> adverbs;

  bool is_quantifier(const std::string& w) const {
    return quantifiers.count(w) != 0 || determiners.count(w) != 0;
  }
};

namespace detail {

inline ParseTree group(std::vector<ParseTree> kids) {
  if (kids.size() == 1) return std::move(kids[0]);
  return ParseTree::make_node(std::move(kids));
}

inline std::vector<ParseTree> leaves_range(std::size_t lo, std::size_t hi) {
  std::vector<ParseTree> out;
  for (std::size_t i = lo; i < hi; ++i) out.push_back(ParseTree::make_leaf(i));
  return out;
}

}  // namespace detail

/// Mark each token with the projectivity of its quantifier argument and build a
/// binarised constituency tree. Throws ParseError naming the first offending token.
inline AnnotatedSentence mark_polarity(const std::vector<std::string>& raw_tokens,
                                       const ControlledGrammar& g) {
  if (raw_tokens.empty()) throw ParseError("empty sentence");
  std::vector<std::string> w;
  for (const auto& t : raw_tokens) w.push_back(lowercase(t));
  const std::size_t n = w.size();
  std::size_t pos = 0;

  auto offending = [&](std::size_t at, std::string_view expected) -> ParseError {
    if (at >= n)
      return ParseError("unexpected end of sentence, expected " + std::string(expected));
    std::string why = g.is_quantifier(w[at]) ? "nested quantifier" : "unexpected token";
    return ParseError(why + " '" + raw_tokens[at] + "' at position " + std::to_string(at) +
                      ", expected " + std::string(expected));
  };

  std::optional<std::string> quantifier;
  if (g.is_quantifier(w[0])) {
    quantifier = w[0];
    pos = 1;
  }

  // Noun phrase: Adjective* Noun [Modifier]
  const std::size_t np_begin = pos;
  while (pos < n && g.adjectives.count(w[pos])) ++pos;
  if (pos >= n || !g.nouns.count(w[pos])) throw offending(pos, "a noun");
  ++pos;
  const std::size_t np_core_end = pos;
  if (pos < n && g.modifiers.count(w[pos])) ++pos;
  const std::size_t np_end = pos;

  // Verb phrase: [Auxiliary] Verb [Adjective* Noun] [Adverb]
  const std::size_t vp_begin = pos;
  std::optional<std::size_t> aux;
  if (pos < n && g.auxiliaries.count(w[pos])) aux = pos++;
  if (pos >= n || !g.verbs.count(w[pos])) throw offending(pos, "a verb");
  const std::size_t verb = pos++;
  const std::size_t obj_begin = pos;
  while (pos < n && g.adjectives.count(w[pos])) ++pos;
  if (pos > obj_begin || (pos < n && g.nouns.count(w[pos]))) {
    if (pos >= n || !g.nouns.count(w[pos])) throw offending(pos, "an object noun");
    ++pos;
  }
  const std::size_t obj_end = pos;
  std::optional<std::size_t> adv;
  if (pos < n && g.adverbs.count(w[pos])) adv = pos++;
  if (pos != n) throw offending(pos, "end of sentence");

  AnnotatedSentence out;
  out.tokens = raw_tokens;
  out.projectivities.assign(n, upward_projectivity());
  out.contexts.assign(n, "none");
  if (quantifier && g.quantifiers.count(*quantifier)) {
    for (std::size_t i = np_begin; i < np_end; ++i) out.contexts[i] = *quantifier + ".arg1";
    for (std::size_t i = vp_begin; i < n; ++i) out.contexts[i] = *quantifier + ".arg2";
    for (std::size_t i = 0; i < n; ++i) out.projectivities[i] = parse_context(out.contexts[i]);
  }

  // Constituency: (Subject VP) with Subject = (Q NP), NP = ((Adj* N) Mod), VP = (Aux ((V Obj) Adv)).
  using detail::group;
  using detail::leaves_range;
  ParseTree np = group(leaves_range(np_begin, np_core_end));
  if (np_end > np_core_end) np = ParseTree::make_node({std::move(np), ParseTree::make_leaf(np_core_end)});
  ParseTree subject = quantifier ? ParseTree::make_node({ParseTree::make_leaf(0), std::move(np)})
                                 : std::move(np);
  std::vector<ParseTree> vcore{ParseTree::make_leaf(verb)};
  if (obj_end > obj_begin) vcore.push_back(group(leaves_range(obj_begin, obj_end)));
  std::vector<ParseTree> vp_parts;
  if (aux) vp_parts.push_back(ParseTree::make_leaf(*aux));
  vp_parts.push_back(group(std::move(vcore)));
  if (adv) vp_parts.push_back(ParseTree::make_leaf(*adv));
  ParseTree vp = group(std::move(vp_parts));
  out.parse = binarize(ParseTree::make_node({std::move(subject), std::move(vp)}));
  out.validate();
  return out;
}

/// Wrap externally computed projectivity rows. `rows` is a JSON array of
/// {"token": str, "rho": {relation-token: relation-token, ... x7}}.
inline AnnotatedSentence ingest_annotations(const std::vector<std::string>& tokens,
                                            const nlohmann::json& rows) {
  if (!rows.is_array()) throw ValidationError("annotation rows must be a JSON array");
  if (rows.size() != tokens.size())
    throw ValidationError("length mismatch: " + std::to_string(tokens.size()) + " tokens, " +
                          std::to_string(rows.size()) + " rows");
  AnnotatedSentence out;
  out.tokens = tokens;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_object() || !row.contains("rho") || !row["rho"].is_object())
      throw ValidationError("row " + std::to_string(i) + " has no \"rho\" object");
    Projectivity::Map map{};
    for (Relation r : kAllRelations) {
      const auto key = std::string(to_token(r));
      if (!row["rho"].contains(key))
        throw ValidationError("row " + std::to_string(i) + " is not total: missing '" + key + "'");
      map[index(r)] = parse_relation(row["rho"][key].get<std::string>());
    }
    if (row["rho"].size() != kNumRelations)
      throw ValidationError("row " + std::to_string(i) + " has unknown relation keys");
    out.projectivities.emplace_back(map);
    out.contexts.emplace_back("custom");
  }
  out.validate();
  return out;
}

/// Serialise rows in the same format ingest_annotations reads.
inline nlohmann::json annotations_to_json(const AnnotatedSentence& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    nlohmann::json rho = nlohmann::json::object();
    for (Relation r : kAllRelations)
      rho[std::string(to_token(r))] = std::string(to_token(s.projectivities[i](r)));
    rows.push_back({{"token", s.tokens[i]}, {"rho", rho}});
  }
  return rows;
}

}  // namespace natlog
