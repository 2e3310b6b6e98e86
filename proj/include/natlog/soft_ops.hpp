#pragma once

// Differentiable counterparts of the relation-algebra operations.

#include <array>
#include <limits>
#include <optional>
#include <vector>

#include "natlog/autodiff.hpp"
#include "natlog/relation.hpp"

namespace natlog::ops {

/// Builds an (n x 7) logit matrix from per-relation score vectors. Relations
/// without a score vector get -inf, so a following softmax gives them zero mass
/// and no gradient.
template <class T>
ad::Var<T> assemble_logits(ad::Tape<T>& tape,
                           const std::array<std::optional<ad::Var<T>>, kNumRelations>& columns,
                           std::size_t n) {
  std::vector<T> out(n * kNumRelations, -std::numeric_limits<T>::infinity());
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> which;
  bool ng = false;
  for (std::size_t k = 0; k < kNumRelations; ++k) {
    if (!columns[k]) continue;
    const auto& c = *columns[k];
    if (c.size() != n) throw ContractViolation("assemble_logits: column length mismatch");
    auto v = c.value();
    for (std::size_t j = 0; j < n; ++j) out[j * kNumRelations + k] = v[j];
    ids.push_back(c.id());
    which.push_back(k);
    ng = ng || tape.needs_grad(c.id());
  }
  if (ids.empty()) throw ContractViolation("assemble_logits: no active relations");
  std::uint32_t self = static_cast<std::uint32_t>(tape.size());
  return tape.make(n, kNumRelations, std::move(out), ng,
                   [ids = std::move(ids), which = std::move(which), self, n](ad::Tape<T>& tp) {
                     auto g = tp.grad(self);
                     for (std::size_t c = 0; c < ids.size(); ++c) {
                       if (!tp.needs_grad(ids[c])) continue;
                       auto gc = tp.grad_mut(ids[c]);
                       for (std::size_t j = 0; j < n; ++j) gc[j] += g[j * kNumRelations + which[c]];
                     }
                   });
}

/// p̄[ρ(k)] += p[k].
template <class T>
ad::Var<T> soft_project(const Projectivity& rho, ad::Var<T> p) {
  ad::Tape<T>& tape = *p.tape();
  if (p.size() != kNumRelations) throw ContractViolation("soft_project: expected 7 entries");
  auto pv = p.value();
  std::vector<T> out(kNumRelations, T(0));
  for (std::size_t k = 0; k < kNumRelations; ++k) out[index(rho(relation_at(k)))] += pv[k];
  const auto ip = p.id();
  std::uint32_t self = static_cast<std::uint32_t>(tape.size());
  return tape.make(kNumRelations, 1, std::move(out), tape.needs_grad(ip),
                   [ip, self, rho](ad::Tape<T>& tp) {
                     auto g = tp.grad(self);
                     auto gp = tp.grad_mut(ip);
                     for (std::size_t k = 0; k < kNumRelations; ++k)
                       gp[k] += g[index(rho(relation_at(k)))];
                   });
}

/// out[k] = Σ_{u⋈v=k} s[u] p[v] g[u*7+v]. An invalid `gates` var means all gates are 1.
template <class T>
ad::Var<T> join_dist(ad::Var<T> s, ad::Var<T> p, std::optional<ad::Var<T>> gates) {
  ad::Tape<T>& tape = *s.tape();
  if (s.size() != kNumRelations || p.size() != kNumRelations)
    throw ContractViolation("join_dist: expected 7-entry inputs");
  if (gates && gates->size() != kNumRelationPairs)
    throw ContractViolation("join_dist: expected 49 gates");
  auto sv = s.value(), pv = p.value();
  std::span<const T> gv;
  if (gates) gv = gates->value();
  std::vector<T> out(kNumRelations, T(0));
  for (std::size_t u = 0; u < kNumRelations; ++u) {
    if (sv[u] < T(0)) throw ContractViolation("join_dist: negative score");
    for (std::size_t v = 0; v < kNumRelations; ++v) {
      const T g = gates ? gv[u * kNumRelations + v] : T(1);
      if (g < T(0)) throw ContractViolation("join_dist: negative gate");
      out[index(join(relation_at(u), relation_at(v)))] += sv[u] * pv[v] * g;
    }
  }
  const auto is = s.id(), ip = p.id();
  const std::optional<std::uint32_t> ig = gates ? std::optional<std::uint32_t>(gates->id()) : std::nullopt;
  bool ng = tape.needs_grad(is) || tape.needs_grad(ip) || (ig && tape.needs_grad(*ig));
  std::uint32_t self = static_cast<std::uint32_t>(tape.size());
  return tape.make(kNumRelations, 1, std::move(out), ng, [is, ip, ig, self](ad::Tape<T>& tp) {
    auto g = tp.grad(self);
    auto sv = tp.value(is), pv = tp.value(ip);
    std::span<const T> gv;
    if (ig) gv = tp.value(*ig);
    const bool gs = tp.needs_grad(is), gp = tp.needs_grad(ip), gg = ig && tp.needs_grad(*ig);
    for (std::size_t u = 0; u < kNumRelations; ++u)
      for (std::size_t v = 0; v < kNumRelations; ++v) {
        const T go = g[index(join(relation_at(u), relation_at(v)))];
        const T gate = ig ? gv[u * kNumRelations + v] : T(1);
        if (gs) tp.grad_mut(is)[u] += go * pv[v] * gate;
        if (gp) tp.grad_mut(ip)[v] += go * sv[u] * gate;
        if (gg) tp.grad_mut(*ig)[u * kNumRelations + v] += go * sv[u] * pv[v];
      }
  });
}

/// Group seven scores into (entailment, contradiction, neutral). Max mode routes
/// the gradient to the first maximal member of each group.
template <class T>
ad::Var<T> group_to_nli(ad::Var<T> s, Grouping mode) {
  ad::Tape<T>& tape = *s.tape();
  if (s.size() != kNumRelations) throw ContractViolation("group_to_nli: expected 7 entries");
  using R = Relation;
  static const std::array<std::vector<std::size_t>, kNumLabels> groups = {
      std::vector<std::size_t>{index(R::Equivalence), index(R::ForwardEntailment)},
      std::vector<std::size_t>{index(R::Negation), index(R::Alternation)},
      std::vector<std::size_t>{index(R::ReverseEntailment), index(R::Cover),
                               index(R::Independence)}};
  auto sv = s.value();
  std::vector<T> out(kNumLabels, T(0));
  std::array<std::size_t, kNumLabels> arg{};
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    if (mode == Grouping::Max) {
      arg[y] = groups[y][0];
      for (std::size_t k : groups[y])
        if (sv[k] > sv[arg[y]]) arg[y] = k;
      out[y] = sv[arg[y]];
    } else {
      for (std::size_t k : groups[y]) out[y] += sv[k];
    }
  }
  const auto is = s.id();
  std::uint32_t self = static_cast<std::uint32_t>(tape.size());
  return tape.make(kNumLabels, 1, std::move(out), tape.needs_grad(is),
                   [is, self, mode, arg](ad::Tape<T>& tp) {
                     auto g = tp.grad(self);
                     auto gs = tp.grad_mut(is);
                     for (std::size_t y = 0; y < kNumLabels; ++y) {
                       if (mode == Grouping::Max) {
                         gs[arg[y]] += g[y];
                       } else {
                         for (std::size_t k : groups[y]) gs[k] += g[y];
                       }
                     }
                   });
}

template <class T>
ad::Var<T> one_hot(ad::Tape<T>& tape, Relation r) {
  std::vector<T> v(kNumRelations, T(0));
  v[index(r)] = T(1);
  return tape.constant(kNumRelations, 1, std::move(v));
}

template <class T>
RelationVector<T> to_relation_vector(ad::Var<T> v) {
  if (v.size() != kNumRelations) throw ContractViolation("expected a 7-entry vector");
  RelationVector<T> out;
  for (std::size_t k = 0; k < kNumRelations; ++k) out[k] = v[k];
  return out;
}

}  // namespace natlog::ops
