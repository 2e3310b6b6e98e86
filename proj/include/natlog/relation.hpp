#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "natlog/error.hpp"

namespace natlog {

// Canonical order is also the vector layout used everywhere.
enum class Relation : std::uint8_t {
  Equivalence = 0,        // ≡
  ForwardEntailment = 1,  // ⊏
  ReverseEntailment = 2,  // ⊐
  Negation = 3,           // ∧
  Alternation = 4,        // |
  Cover = 5,              // ⌣
  Independence = 6,       // #
};

inline constexpr std::size_t kNumRelations = 7;
inline constexpr std::size_t kNumRelationPairs = kNumRelations * kNumRelations;

inline constexpr std::array<Relation, kNumRelations> kAllRelations = {
    Relation::Equivalence, Relation::ForwardEntailment, Relation::ReverseEntailment,
    Relation::Negation,    Relation::Alternation,       Relation::Cover,
    Relation::Independence};

constexpr std::size_t index(Relation r) noexcept { return static_cast<std::size_t>(r); }

constexpr Relation relation_at(std::size_t i) {
  if (i >= kNumRelations) throw ContractViolation("relation index out of range");
  return static_cast<Relation>(i);
}

inline constexpr std::array<std::string_view, kNumRelations> kRelationTokens = {
    "eq", "ent_f", "ent_r", "neg", "alt", "cov", "ind"};

inline constexpr std::array<std::string_view, kNumRelations> kRelationSymbols = {
    "≡", "⊏", "⊐", "^", "|", "⌣", "#"};

constexpr std::string_view to_token(Relation r) noexcept { return kRelationTokens[index(r)]; }
constexpr std::string_view to_symbol(Relation r) noexcept { return kRelationSymbols[index(r)]; }

inline std::optional<Relation> try_parse_relation(std::string_view token) {
  for (std::size_t i = 0; i < kNumRelations; ++i) {
    if (kRelationTokens[i] == token || kRelationSymbols[i] == token) return relation_at(i);
  }
  return std::nullopt;
}

inline Relation parse_relation(std::string_view token) {
  if (auto r = try_parse_relation(token)) return *r;
  throw ParseError("unknown relation token '" + std::string(token) + "'");
}

enum class NliLabel : std::uint8_t { Entailment = 0, Contradiction = 1, Neutral = 2 };

inline constexpr std::size_t kNumLabels = 3;

constexpr std::string_view to_string(NliLabel y) noexcept {
  switch (y) {
    case NliLabel::Entailment: return "entailment";
    case NliLabel::Contradiction: return "contradiction";
    case NliLabel::Neutral: return "neutral";
  }
  return "neutral";
}

inline NliLabel parse_label(std::string_view s) {
  if (s == "entailment") return NliLabel::Entailment;
  if (s == "contradiction") return NliLabel::Contradiction;
  if (s == "neutral") return NliLabel::Neutral;
  throw ParseError("unknown NLI label '" + std::string(s) + "'");
}

/// Label group of a single relation: {≡,⊏} entail, {∧,|} contradict, the rest are neutral.
constexpr NliLabel label_of(Relation r) noexcept {
  switch (r) {
    case Relation::Equivalence:
    case Relation::ForwardEntailment: return NliLabel::Entailment;
    case Relation::Negation:
    case Relation::Alternation: return NliLabel::Contradiction;
    default: return NliLabel::Neutral;
  }
}

// ---------------------------------------------------------------------------
// Join table. Row = left operand (state so far), column = right operand.

namespace detail {
using R = Relation;
inline constexpr R EQ = R::Equivalence, FE = R::ForwardEntailment, RE = R::ReverseEntailment,
                   NG = R::Negation, AL = R::Alternation, CV = R::Cover, IN = R::Independence;

inline constexpr std::array<std::array<Relation, kNumRelations>, kNumRelations> kJoinTable = {{
    /* ≡ */ {EQ, FE, RE, NG, AL, CV, IN},
    /* ⊏ */ {FE, FE, IN, AL, AL, IN, IN},
    /* ⊐ */ {RE, IN, RE, CV, IN, CV, IN},
    /* ∧ */ {NG, CV, AL, EQ, RE, FE, IN},
    /* | */ {AL, IN, AL, FE, IN, FE, IN},
    /* ⌣ */ {CV, CV, IN, RE, RE, IN, IN},
    /* # */ {IN, IN, IN, IN, IN, IN, IN},
}};
}  // namespace detail

constexpr Relation join(Relation u, Relation v) noexcept {
  return detail::kJoinTable[index(u)][index(v)];
}

/// Left fold of join starting from ≡.
inline Relation join_all(std::span<const Relation> rels) noexcept {
  Relation acc = Relation::Equivalence;
  for (Relation r : rels) acc = join(acc, r);
  return acc;
}

// ---------------------------------------------------------------------------
// Projectivity

class Projectivity {
 public:
  using Map = std::array<Relation, kNumRelations>;

  constexpr Projectivity() noexcept
      : map_{detail::EQ, detail::FE, detail::RE, detail::NG, detail::AL, detail::CV, detail::IN} {}
  constexpr explicit Projectivity(const Map& map) : map_(map) {}

  constexpr Relation operator()(Relation r) const noexcept { return map_[index(r)]; }
  constexpr const Map& map() const noexcept { return map_; }

  constexpr bool preserves_equivalence() const noexcept {
    return map_[index(Relation::Equivalence)] == Relation::Equivalence;
  }

  friend constexpr bool operator==(const Projectivity&, const Projectivity&) = default;

 private:
  Map map_;
};

enum class Quantifier : std::uint8_t { All, Some, No };
enum class ArgumentPosition : std::uint8_t { First, Second };

namespace detail {
inline constexpr Projectivity::Map kAllArg1 = {EQ, RE, FE, AL, IN, AL, IN};
inline constexpr Projectivity::Map kAllArg2 = {EQ, FE, RE, AL, AL, IN, IN};
inline constexpr Projectivity::Map kSomeArg = {EQ, FE, RE, CV, IN, CV, IN};
inline constexpr Projectivity::Map kNoArg = {EQ, RE, FE, AL, IN, AL, IN};
}  // namespace detail

constexpr Projectivity projectivity(Quantifier q, ArgumentPosition pos) noexcept {
  switch (q) {
    case Quantifier::All:
      return Projectivity(pos == ArgumentPosition::First ? detail::kAllArg1 : detail::kAllArg2);
    case Quantifier::Some: return Projectivity(detail::kSomeArg);
    case Quantifier::No: return Projectivity(detail::kNoArg);
  }
  return Projectivity(detail::kSomeArg);
}

/// Default context for tokens outside any downward-monotone scope.
constexpr Projectivity upward_projectivity() noexcept {
  return projectivity(Quantifier::Some, ArgumentPosition::First);
}

constexpr Relation project(const Projectivity& rho, Relation r) noexcept { return rho(r); }

/// Resolve a context label ("all.arg1", "no.arg2", "some.arg1", "none", ...) to its row.
/// "none" is an unscoped token and gets the upward default.
inline Projectivity parse_context(std::string_view name) {
  if (name == "all.arg1") return projectivity(Quantifier::All, ArgumentPosition::First);
  if (name == "all.arg2") return projectivity(Quantifier::All, ArgumentPosition::Second);
  if (name == "some.arg1") return projectivity(Quantifier::Some, ArgumentPosition::First);
  if (name == "some.arg2") return projectivity(Quantifier::Some, ArgumentPosition::Second);
  if (name == "no.arg1") return projectivity(Quantifier::No, ArgumentPosition::First);
  if (name == "no.arg2") return projectivity(Quantifier::No, ArgumentPosition::Second);
  if (name == "none") return upward_projectivity();
  if (name == "identity") return Projectivity{};
  throw ParseError("unknown projectivity context '" + std::string(name) + "'");
}

/// Upward contexts keep ⊏ as ⊏; downward contexts flip it to ⊐.
inline bool is_upward(const Projectivity& rho) noexcept {
  return rho(Relation::ForwardEntailment) == Relation::ForwardEntailment;
}
inline bool is_downward(const Projectivity& rho) noexcept {
  return rho(Relation::ForwardEntailment) == Relation::ReverseEntailment;
}

// ---------------------------------------------------------------------------
// Distributions and score vectors

template <class T>
using RelationVector = std::array<T, kNumRelations>;

template <class T>
RelationVector<T> one_hot(Relation r) {
  RelationVector<T> v{};
  v[index(r)] = T(1);
  return v;
}

template <class T>
RelationVector<T> uniform_relations() {
  RelationVector<T> v;
  v.fill(T(1) / T(kNumRelations));
  return v;
}

template <class T>
Relation argmax(const RelationVector<T>& v) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumRelations; ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<Relation>(best);
}

/// Validated probability vector over the seven relations.
template <class T = double>
class RelationDistribution {
 public:
  static constexpr double kTolerance = 1e-6;

  RelationDistribution() : probs_(uniform_relations<T>()) {}
  explicit RelationDistribution(const RelationVector<T>& probs) : probs_(probs) { validate(); }

  static RelationDistribution point(Relation r) { return RelationDistribution(one_hot<T>(r)); }

  T operator[](Relation r) const noexcept { return probs_[index(r)]; }
  T operator[](std::size_t i) const noexcept { return probs_[i]; }
  const RelationVector<T>& probs() const noexcept { return probs_; }
  Relation argmax() const noexcept { return natlog::argmax(probs_); }

  friend bool operator==(const RelationDistribution&, const RelationDistribution&) = default;

 private:
  void validate() const {
    double total = 0;
    for (T p : probs_) {
      if (!(p >= T(0)) || !std::isfinite(static_cast<double>(p)))
        throw ContractViolation("relation distribution has a negative or non-finite entry");
      total += static_cast<double>(p);
    }
    if (std::abs(total - 1.0) > kTolerance)
      throw ContractViolation("relation distribution does not sum to 1");
  }

  RelationVector<T> probs_;
};

/// Gated, marginalised join: out[k] = Σ su[u]·pv[v]·gate(u,v) over u⋈v = k.
/// Gates are indexed u * 7 + v.
template <class T>
RelationVector<T> join_dist(const RelationVector<T>& su, const RelationVector<T>& pv,
                            std::span<const T> gates) {
  if (gates.size() != kNumRelationPairs) throw ContractViolation("join_dist expects 49 gates");
  RelationVector<T> out{};
  for (std::size_t u = 0; u < kNumRelations; ++u) {
    if (su[u] < T(0)) throw ContractViolation("join_dist: negative score");
    for (std::size_t v = 0; v < kNumRelations; ++v) {
      const T g = gates[u * kNumRelations + v];
      if (g < T(0)) throw ContractViolation("join_dist: negative gate");
      if (pv[v] < T(0)) throw ContractViolation("join_dist: negative probability");
      out[index(join(relation_at(u), relation_at(v)))] += su[u] * pv[v] * g;
    }
  }
  return out;
}

template <class T>
RelationVector<T> join_dist(const RelationVector<T>& su, const RelationVector<T>& pv) {
  std::array<T, kNumRelationPairs> ones;
  ones.fill(T(1));
  return join_dist<T>(su, pv, std::span<const T>(ones));
}

template <class T>
RelationVector<T> soft_project(const Projectivity& rho, const RelationVector<T>& p) {
  RelationVector<T> out{};
  for (std::size_t k = 0; k < kNumRelations; ++k) out[index(rho(relation_at(k)))] += p[k];
  return out;
}

template <class T>
RelationDistribution<T> soft_project(const Projectivity& rho, const RelationDistribution<T>& p) {
  return RelationDistribution<T>(soft_project(rho, p.probs()));
}

enum class Grouping : std::uint8_t { Max, Sum };

/// Collapse seven relation scores into (entailment, contradiction, neutral).
template <class T>
std::array<T, kNumLabels> group_to_nli(const RelationVector<T>& s, Grouping mode = Grouping::Max) {
  using R = Relation;
  auto combine = [mode](std::initializer_list<T> xs) {
    T acc = mode == Grouping::Max ? *xs.begin() : T(0);
    for (T x : xs) acc = mode == Grouping::Max ? std::max(acc, x) : acc + x;
    return acc;
  };
  return {combine({s[index(R::Equivalence)], s[index(R::ForwardEntailment)]}),
          combine({s[index(R::Negation)], s[index(R::Alternation)]}),
          combine({s[index(R::ReverseEntailment)], s[index(R::Cover)], s[index(R::Independence)]})};
}

/// Argmax over grouped label scores; any tie resolves to Neutral.
template <class T>
NliLabel decide_label(const std::array<T, kNumLabels>& scores) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumLabels; ++i)
    if (scores[i] > scores[best]) best = i;
  for (std::size_t i = 0; i < kNumLabels; ++i)
    if (i != best && scores[i] == scores[best]) return NliLabel::Neutral;
  return static_cast<NliLabel>(best);
}

/// FNV-1a over the join and projection tables, for fixture checksum tests.
inline std::uint64_t table_checksum() noexcept {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (const auto& row : detail::kJoinTable)
    for (Relation r : row) mix(static_cast<std::uint8_t>(r));
  for (const auto* m : {&detail::kAllArg1, &detail::kAllArg2, &detail::kSomeArg, &detail::kNoArg})
    for (Relation r : *m) mix(static_cast<std::uint8_t>(r));
  return h;
}

}  // namespace natlog
