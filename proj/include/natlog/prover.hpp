#pragma once

// Exact symbolic inference: diff the two sentences into edits, project each
// edit's lexical relation through its context and fold the results with join.

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "natlog/error.hpp"
#include "natlog/polarity.hpp"
#include "natlog/relation.hpp"

namespace natlog {

enum class EditType : std::uint8_t { Insertion, Deletion, Substitution };

inline std::string_view to_string(EditType t) {
  switch (t) {
    case EditType::Insertion: return "insertion";
    case EditType::Deletion: return "deletion";
    case EditType::Substitution: return "substitution";
  }
  return "substitution";
}

inline EditType parse_edit_type(std::string_view s) {
  if (s == "insertion") return EditType::Insertion;
  if (s == "deletion") return EditType::Deletion;
  if (s == "substitution") return EditType::Substitution;
  throw ParseError("unknown edit type '" + std::string(s) + "'");
}

/// A single-token difference between premise and hypothesis.
struct TokenEdit {
  EditType type = EditType::Substitution;
  std::optional<std::size_t> premise_index;     ///< absent for insertions
  std::optional<std::size_t> hypothesis_index;  ///< absent for deletions
  /// Hypothesis position where the edit is aggregated. A deletion is attributed
  /// to the hypothesis token that follows it, or to the last token at the end.
  std::size_t position = 0;
};

/// Whether a premise word may be replaced by a hypothesis word in one edit.
using SubstitutionTest = std::function<bool(const std::string&, const std::string&)>;

/// Token-level diff. Identical tokens (case-insensitive) are aligned by a longest
/// common subsequence; inside each unaligned gap, deletions and insertions are
/// paired into substitutions wherever `substitutable` allows, keeping order.
inline std::vector<TokenEdit> diff_edits(const std::vector<std::string>& premise,
                                         const std::vector<std::string>& hypothesis,
                                         const SubstitutionTest& substitutable = {}) {
  if (hypothesis.empty()) throw ContractViolation("diff_edits: empty hypothesis");
  const std::size_t m = premise.size(), n = hypothesis.size();
  std::vector<std::string> p, h;
  for (const auto& w : premise) p.push_back(lowercase(w));
  for (const auto& w : hypothesis) h.push_back(lowercase(w));
  std::vector<std::vector<std::size_t>> lcs(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = m; i-- > 0;)
    for (std::size_t j = n; j-- > 0;)
      lcs[i][j] = p[i] == h[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);

  auto can_pair = [&](std::size_t i, std::size_t j) {
    return !substitutable || substitutable(p[i], h[j]);
  };
  std::vector<TokenEdit> out;
  // Emit the edits of one gap: premise [i0, i1) against hypothesis [j0, j1).
  auto flush_gap = [&](std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
    const std::size_t a = i1 - i0, b = j1 - j0;
    std::vector<std::vector<std::size_t>> best(a + 1, std::vector<std::size_t>(b + 1, 0));
    for (std::size_t x = a; x-- > 0;)
      for (std::size_t y = b; y-- > 0;)
        best[x][y] = std::max({best[x + 1][y], best[x][y + 1],
                               can_pair(i0 + x, j0 + y) ? best[x + 1][y + 1] + 1 : std::size_t{0}});
    std::size_t x = 0, y = 0;
    while (x < a || y < b) {
      const std::size_t i = i0 + x, j = j0 + y;
      if (x < a && y < b && can_pair(i, j) && best[x][y] == best[x + 1][y + 1] + 1) {
        out.push_back({EditType::Substitution, i, j, j});
        ++x;
        ++y;
      } else if (x < a && (y == b || best[x][y] == best[x + 1][y])) {
        out.push_back({EditType::Deletion, i, std::nullopt, std::min(j, n - 1)});
        ++x;
      } else {
        out.push_back({EditType::Insertion, std::nullopt, j, j});
        ++y;
      }
    }
  };

  std::size_t i = 0, j = 0, gi = 0, gj = 0;
  while (i < m || j < n) {
    if (i < m && j < n && p[i] == h[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      flush_gap(gi, i, gj, j);
      gi = ++i;
      gj = ++j;
    } else if (i < m && (j == n || lcs[i + 1][j] >= lcs[i][j + 1])) {
      ++i;
    } else {
      ++j;
    }
  }
  flush_gap(gi, m, gj, n);
  return out;
}

struct ProofStep {
  std::size_t position = 0;
  Relation lexical = Relation::Equivalence;
  Projectivity projectivity;
  Relation projected = Relation::Equivalence;
  Relation state = Relation::Equivalence;  ///< relation after joining this step
};

struct Proof {
  std::vector<ProofStep> steps;
  Relation final_relation = Relation::Equivalence;
  NliLabel label = NliLabel::Entailment;

  /// Relation after each hypothesis position: ≡ until the first edit, then the
  /// running join. Used as the gold aggregation path.
  std::vector<Relation> trajectory(std::size_t length) const {
    std::vector<Relation> z(length, Relation::Equivalence);
    Relation cur = Relation::Equivalence;
    std::size_t k = 0;
    for (std::size_t t = 0; t < length; ++t) {
      while (k < steps.size() && steps[k].position == t) cur = steps[k++].state;
      z[t] = cur;
    }
    return z;
  }
};

/// Fold pre-projected relations from ≡, in order.
inline Proof prove(const std::vector<Relation>& lexical, const std::vector<Projectivity>& contexts,
                   const std::vector<std::size_t>& positions) {
  if (lexical.size() != contexts.size() || lexical.size() != positions.size())
    throw ContractViolation("prove: relations, contexts and positions must have equal length");
  Proof p;
  Relation state = Relation::Equivalence;
  for (std::size_t k = 0; k < lexical.size(); ++k) {
    if (k > 0 && positions[k] < positions[k - 1])
      throw ContractViolation("prove: edit positions must be non-decreasing");
    const Relation projected = project(contexts[k], lexical[k]);
    state = join(state, projected);
    p.steps.push_back({positions[k], lexical[k], contexts[k], projected, state});
  }
  p.final_relation = state;
  p.label = label_of(state);
  return p;
}

/// Prove a sentence pair given one lexical relation per edit (in diff order).
/// Deleted tokens take their context from the premise annotation when supplied.
inline Proof prove_pair(const AnnotatedSentence& premise, const AnnotatedSentence& hypothesis,
                        const std::vector<Relation>& relations, const SubstitutionTest& substitutable = {}) {
  const auto edits = diff_edits(premise.tokens, hypothesis.tokens, substitutable);
  if (edits.size() != relations.size())
    throw ValidationError("found " + std::to_string(edits.size()) + " edits but " +
                          std::to_string(relations.size()) + " relations were given");
  std::vector<Projectivity> ctx;
  std::vector<std::size_t> pos;
  for (const auto& e : edits) {
    if (e.type == EditType::Deletion && premise.projectivities.size() == premise.tokens.size())
      ctx.push_back(premise.projectivities[*e.premise_index]);
    else
      ctx.push_back(hypothesis.projectivities[e.position]);
    pos.push_back(e.position);
  }
  return prove(relations, ctx, pos);
}

}  // namespace natlog
