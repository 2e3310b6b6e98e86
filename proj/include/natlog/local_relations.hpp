#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "natlog/autodiff.hpp"
#include "natlog/encoder.hpp"
#include "natlog/polarity.hpp"
#include "natlog/relation.hpp"
#include "natlog/soft_ops.hpp"

namespace natlog {

/// One d x d bilinear slice per relation. ⊐ has no slice of its own: it is
/// scored with the ⊏ slice and the two arguments swapped.
template <class T>
class BilinearParams {
 public:
  static constexpr std::size_t kStoredSlices = kNumRelations - 1;

  explicit BilinearParams(std::size_t d) : d_(d) {
    for (Relation r : kAllRelations) {
      if (r == Relation::ReverseEntailment) continue;
      slices_[index(r)].emplace("bilinear." + std::string(to_token(r)), d, d);
    }
  }

  void initialize(std::mt19937_64& rng) {
    const double s = 1.0 / static_cast<double>(d_);
    for (auto& m : slices_)
      if (m) init_uniform(*m, rng, s);
  }

  std::size_t dim() const noexcept { return d_; }

  std::size_t stored_slice_count() const noexcept {
    std::size_t c = 0;
    for (const auto& m : slices_) c += m.has_value();
    return c;
  }

  /// Storage backing relation `r` (⊏'s slice for ⊐).
  ad::Parameter<T>& slice(Relation r) {
    if (r == Relation::ReverseEntailment) r = Relation::ForwardEntailment;
    return *slices_[index(r)];
  }
  const ad::Parameter<T>& slice(Relation r) const {
    if (r == Relation::ReverseEntailment) r = Relation::ForwardEntailment;
    return *slices_[index(r)];
  }

  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> out;
    for (auto& m : slices_)
      if (m) out.push_back(&*m);
    return out;
  }

 private:
  std::size_t d_;
  std::array<std::optional<ad::Parameter<T>>, kNumRelations> slices_;
};

/// Which relations receive a score. Collapse removes ∧ and ⌣.
inline std::array<bool, kNumRelations> active_relations(bool collapse) {
  std::array<bool, kNumRelations> a;
  a.fill(true);
  if (collapse) {
    a[index(Relation::Negation)] = false;
    a[index(Relation::Cover)] = false;
  }
  return a;
}

/// Per-token bilinear logits as an (n x 7) matrix; inactive relations hold -inf.
/// logit_k(j) = b̃_j · M_k b_j, and logit_⊐(j) = b_j · M_⊏ b̃_j.
template <class T>
ad::Var<T> bilinear_logits(ad::Tape<T>& tape, ad::Var<T> summaries, ad::Var<T> hypothesis,
                           BilinearParams<T>& params, const std::array<bool, kNumRelations>& active) {
  const std::size_t n = hypothesis.rows();
  if (summaries.rows() != n || summaries.cols() != params.dim() || hypothesis.cols() != params.dim())
    throw ContractViolation("bilinear_logits: dimension mismatch");
  std::array<std::optional<ad::Var<T>>, kNumRelations> cols;
  for (Relation r : kAllRelations) {
    if (!active[index(r)]) continue;
    auto m = tape.param(params.slice(r));
    if (r == Relation::ReverseEntailment) {
      cols[index(r)] = ad::rowwise_dot(hypothesis, ad::matmul_nt(summaries, m));
    } else {
      cols[index(r)] = ad::rowwise_dot(summaries, ad::matmul_nt(hypothesis, m));
    }
  }
  return ops::assemble_logits(tape, cols, n);
}

/// Raw seven logits for one aligned pair (b̃, b).
template <class T>
RelationVector<T> local_logits(std::span<const T> summary, std::span<const T> hyp,
                               BilinearParams<T>& params) {
  if (summary.size() != params.dim() || hyp.size() != params.dim())
    throw ContractViolation("score_local: vector dimension does not match the bilinear slices");
  ad::Tape<T> tape(false);
  auto bt = tape.constant(1, summary.size(), std::vector<T>(summary.begin(), summary.end()));
  auto b = tape.constant(1, hyp.size(), std::vector<T>(hyp.begin(), hyp.end()));
  auto logits = bilinear_logits(tape, bt, b, params, active_relations(false));
  RelationVector<T> out;
  for (std::size_t k = 0; k < kNumRelations; ++k) out[k] = logits[k];
  return out;
}

/// softmax of the bilinear logits: a distribution over all seven relations.
template <class T>
RelationDistribution<T> score_local(std::span<const T> summary, std::span<const T> hyp,
                                    BilinearParams<T>& params) {
  auto logits = local_logits(summary, hyp, params);
  T mx = logits[0];
  for (T x : logits) mx = std::max(mx, x);
  RelationVector<T> p;
  T total = T(0);
  for (std::size_t k = 0; k < kNumRelations; ++k) total += (p[k] = std::exp(logits[k] - mx));
  for (auto& x : p) x /= total;
  return RelationDistribution<T>(p);
}

/// φ = 1 forces ≡; otherwise ∧ and ⌣ are zeroed and the rest renormalised.
template <class T>
RelationDistribution<T> apply_constraints(const RelationDistribution<T>& p, bool phi) {
  if (phi) return RelationDistribution<T>::point(Relation::Equivalence);
  RelationVector<T> q = p.probs();
  q[index(Relation::Negation)] = T(0);
  q[index(Relation::Cover)] = T(0);
  T total = T(0);
  for (T x : q) total += x;
  if (!(total > T(0))) throw ContractViolation("apply_constraints: no mass left after collapse");
  for (auto& x : q) x /= total;
  return RelationDistribution<T>(q);
}

struct LocalOptions {
  bool equivalence_constraint = true;
  bool collapse = true;
};

template <class T>
struct LocalVars {
  std::vector<ad::Var<T>> local;      ///< p_j after constraints
  std::vector<ad::Var<T>> projected;  ///< p̄_j
};

/// score -> constraints -> soft projection, for every hypothesis token.
/// Tokens with φ_j = 1 get a constant one-hot(≡), so no gradient reaches their scores.
template <class T>
LocalVars<T> local_pipeline(ad::Tape<T>& tape, const AlignmentVars<T>& alignment,
                            ad::Var<T> hypothesis_matrix, const AnnotatedSentence& annotated,
                            BilinearParams<T>& params, const LocalOptions& opts) {
  const std::size_t n = alignment.summaries.size();
  if (annotated.size() != n || alignment.hard_indicator.size() != n)
    throw ContractViolation("local_pipeline: alignment and annotation lengths differ");
  auto summaries = ad::stack_rows<T>(alignment.summaries);
  auto logits =
      bilinear_logits(tape, summaries, hypothesis_matrix, params, active_relations(opts.collapse));
  LocalVars<T> out;
  for (std::size_t j = 0; j < n; ++j) {
    ad::Var<T> p = (opts.equivalence_constraint && alignment.hard_indicator[j])
                       ? ops::one_hot<T>(tape, Relation::Equivalence)
                       : ad::softmax(ad::row(logits, j));
    out.local.push_back(p);
    out.projected.push_back(ops::soft_project(annotated.projectivities[j], p));
  }
  return out;
}

/// Value-level pipeline over a computed alignment.
template <class T>
std::vector<RelationDistribution<T>> local_pipeline(const AlignmentResult<T>& alignment,
                                                    const EncodedSentence<T>& hypothesis,
                                                    const AnnotatedSentence& annotated,
                                                    BilinearParams<T>& params,
                                                    const LocalOptions& opts = {}) {
  const std::size_t n = hypothesis.vectors.size();
  if (alignment.summaries.size() != n || annotated.size() != n)
    throw ContractViolation("local_pipeline: alignment and annotation lengths differ");
  std::vector<RelationDistribution<T>> out;
  for (std::size_t j = 0; j < n; ++j) {
    auto p = score_local<T>(alignment.summaries[j], hypothesis.vectors[j], params);
    if (opts.equivalence_constraint && alignment.hard_indicator[j]) {
      p = RelationDistribution<T>::point(Relation::Equivalence);
    } else if (opts.collapse) {
      p = apply_constraints(p, false);
    }
    out.push_back(soft_project(annotated.projectivities[j], p));
  }
  return out;
}

}  // namespace natlog
