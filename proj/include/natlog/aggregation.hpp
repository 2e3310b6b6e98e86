#pragma once

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

/// Two-layer map: W2 tanh(W1 x + b1) + b2.
template <class T>
struct FeedForward {
  ad::Parameter<T> w1, b1, w2, b2;

  FeedForward(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out)
      : w1(name + ".w1", hidden, in),
        b1(name + ".b1", hidden, 1),
        w2(name + ".w2", out, hidden),
        b2(name + ".b2", out, 1) {}

  void initialize(std::mt19937_64& rng) {
    init_uniform(w1, rng, 1.0 / std::sqrt(static_cast<double>(w1.cols)));
    init_uniform(w2, rng, 1.0 / std::sqrt(static_cast<double>(w2.cols)));
  }

  ad::Var<T> operator()(ad::Tape<T>& tape, ad::Var<T> x) {
    auto h = ad::tanh(ad::add(ad::matvec(tape.param(w1), x), tape.param(b1)));
    return ad::add(ad::matvec(tape.param(w2), h), tape.param(b2));
  }

  std::vector<ad::Parameter<T>*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

/// Memory maps f_q, f_m, f_c and one gate (weight row + bias) per ordered relation pair.
template <class T>
class AggregationParams {
 public:
  AggregationParams(std::size_t pair_dim, std::size_t hidden, std::size_t memory_dim)
      : query("memory.query", pair_dim, hidden, memory_dim),
        key("memory.key", pair_dim, hidden, memory_dim),
        output("memory.output", pair_dim, hidden, memory_dim),
        gate_weight("gate.weight", kNumRelationPairs, memory_dim),
        gate_bias("gate.bias", kNumRelationPairs, 1),
        pair_dim_(pair_dim),
        memory_dim_(memory_dim) {}

  void initialize(std::mt19937_64& rng) {
    query.initialize(rng);
    key.initialize(rng);
    output.initialize(rng);
    init_uniform(gate_weight, rng, 0.1 / std::sqrt(static_cast<double>(memory_dim_)));
  }

  std::size_t pair_dim() const noexcept { return pair_dim_; }
  std::size_t memory_dim() const noexcept { return memory_dim_; }

  std::vector<ad::Parameter<T>*> memory_parameters() {
    std::vector<ad::Parameter<T>*> out;
    for (auto* f : {&query, &key, &output})
      for (auto* p : f->parameters()) out.push_back(p);
    return out;
  }
  std::vector<ad::Parameter<T>*> gate_parameters() { return {&gate_weight, &gate_bias}; }

  FeedForward<T> query, key, output;
  ad::Parameter<T> gate_weight;  // 49 x d_m, row u*7+v
  ad::Parameter<T> gate_bias;    // 49

 private:
  std::size_t pair_dim_;
  std::size_t memory_dim_;
};

/// Memory contents on a tape: keys m_t and outputs c_t for every visited step.
template <class T>
struct MemoryVars {
  std::vector<ad::Var<T>> keys;
  std::vector<ad::Var<T>> outputs;
};

template <class T>
struct MemoryRead {
  ad::Var<T> response;  ///< o_j
  ad::Var<T> alpha;     ///< attention over t = 1..j
};

/// Store the current pair, then read: α = softmax_t(q_j · m_t), o_j = Σ_t α_t c_t.
template <class T>
MemoryRead<T> memory_step(ad::Tape<T>& tape, ad::Var<T> pair_repr, MemoryVars<T>& memory,
                          AggregationParams<T>& params) {
  if (pair_repr.size() != params.pair_dim())
    throw ContractViolation("memory_step: pair representation has the wrong width");
  memory.keys.push_back(params.key(tape, pair_repr));
  memory.outputs.push_back(params.output(tape, pair_repr));
  auto q = params.query(tape, pair_repr);
  auto alpha = ad::softmax(ad::dots<T>(q, memory.keys));
  return {ad::weighted_sum<T>(alpha, memory.outputs), alpha};
}

/// All 49 gates g^{u⋈v}(o) = sigmoid(w_{u⋈v} · o + b_{u⋈v}).
template <class T>
ad::Var<T> gates(ad::Tape<T>& tape, ad::Var<T> response, AggregationParams<T>& params) {
  return ad::sigmoid(
      ad::add(ad::matvec(tape.param(params.gate_weight), response), tape.param(params.gate_bias)));
}

/// Single gate value.
template <class T>
T gate(Relation u, Relation v, std::span<const T> response, const AggregationParams<T>& params) {
  const std::size_t dm = params.memory_dim();
  if (response.size() != dm) throw ContractViolation("gate: response has the wrong width");
  const std::size_t row = index(u) * kNumRelations + index(v);
  T acc = params.gate_bias.value[row];
  for (std::size_t i = 0; i < dm; ++i) acc += params.gate_weight.value[row * dm + i] * response[i];
  return ad::sigmoid_value(acc);
}

struct AggregationOptions {
  bool use_gates = true;
  bool softmax_scores = false;
};

/// One aggregation step: marginalised product of the previous state and the
/// new distribution, weighted by the gates and renormalised.
template <class T>
ad::Var<T> step_sequential(ad::Var<T> prev, ad::Var<T> projected, std::optional<ad::Var<T>> gate_values,
                           const AggregationOptions& opts) {
  auto s = ops::join_dist(prev, projected, gate_values);
  return opts.softmax_scores ? s : ad::normalize(s);
}

/// Report view of a state: the state itself, or its softmax in softmax-score mode.
template <class T>
ad::Var<T> state_distribution(ad::Var<T> s, const AggregationOptions& opts) {
  return opts.softmax_scores ? ad::softmax(s) : s;
}

template <class T>
struct AggregationVars {
  std::vector<ad::Var<T>> states;  ///< s_1..s_n (sequential) or node states in post-order (tree)
  std::vector<ad::Var<T>> alphas;
  std::vector<ad::Var<T>> gate_values;
  ad::Var<T> final_state;
};

/// Left-to-right aggregation. s_1 = p̄_1; every step is written to memory.
template <class T>
AggregationVars<T> run_sequential(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& projected,
                                  const std::vector<ad::Var<T>>& pair_reprs,
                                  AggregationParams<T>& params, const AggregationOptions& opts) {
  if (projected.empty()) throw ContractViolation("run_sequential: no steps");
  if (opts.use_gates && pair_reprs.size() != projected.size())
    throw ContractViolation("run_sequential: one pair representation per step required");
  AggregationVars<T> out;
  MemoryVars<T> memory;
  ad::Var<T> s = projected[0];
  if (opts.use_gates) out.alphas.push_back(memory_step(tape, pair_reprs[0], memory, params).alpha);
  out.states.push_back(s);
  for (std::size_t j = 1; j < projected.size(); ++j) {
    std::optional<ad::Var<T>> g;
    if (opts.use_gates) {
      auto read = memory_step(tape, pair_reprs[j], memory, params);
      out.alphas.push_back(read.alpha);
      g = gates(tape, read.response, params);
      out.gate_values.push_back(*g);
    }
    s = step_sequential(s, projected[j], g, opts);
    out.states.push_back(s);
  }
  out.final_state = s;
  return out;
}

/// Bottom-up aggregation over a binary tree, visiting nodes in post-order
/// (left subtree, right subtree, node). Leaves start at p̄_j; an internal node's
/// pair representation is the mean of its children's.
template <class T>
AggregationVars<T> run_tree(ad::Tape<T>& tape, const ParseTree& tree,
                            const std::vector<ad::Var<T>>& projected,
                            const std::vector<ad::Var<T>>& pair_reprs, AggregationParams<T>& params,
                            const AggregationOptions& opts) {
  if (!tree.is_binary()) throw ContractViolation("run_tree: tree is not binary");
  validate_spans(tree, projected.size());
  if (opts.use_gates && pair_reprs.size() != projected.size())
    throw ContractViolation("run_tree: one pair representation per leaf required");
  AggregationVars<T> out;
  MemoryVars<T> memory;
  struct Visit {
    ad::Var<T> state;
    ad::Var<T> repr;
  };
  std::function<Visit(const ParseTree&)> visit = [&](const ParseTree& node) -> Visit {
    if (node.is_leaf()) {
      Visit v{projected[node.leaf], opts.use_gates ? pair_reprs[node.leaf] : ad::Var<T>{}};
      if (opts.use_gates) out.alphas.push_back(memory_step(tape, v.repr, memory, params).alpha);
      out.states.push_back(v.state);
      return v;
    }
    Visit l = visit(node.children[0]);
    Visit r = visit(node.children[1]);
    Visit v;
    std::optional<ad::Var<T>> g;
    if (opts.use_gates) {
      v.repr = ad::scale(ad::add(l.repr, r.repr), T(0.5));
      auto read = memory_step(tape, v.repr, memory, params);
      out.alphas.push_back(read.alpha);
      g = gates(tape, read.response, params);
      out.gate_values.push_back(*g);
    }
    v.state = step_sequential(l.state, r.state, g, opts);
    out.states.push_back(v.state);
    return v;
  };
  out.final_state = visit(tree).state;
  return out;
}

// ---------------------------------------------------------------------------
// Value-level API

template <class T>
struct MemoryState {
  std::vector<std::vector<T>> keys;     ///< m_t
  std::vector<std::vector<T>> outputs;  ///< c_t
  std::vector<T> response;              ///< o_j of the last step
  std::vector<T> alpha;                 ///< α_{j,t} of the last step
};

template <class T>
MemoryState<T> memory_step(std::span<const T> pair_repr, MemoryState<T> state,
                           AggregationParams<T>& params) {
  ad::Tape<T> tape(false);
  MemoryVars<T> mem;
  for (std::size_t t = 0; t < state.keys.size(); ++t) {
    mem.keys.push_back(tape.constant(std::span<const T>(state.keys[t])));
    mem.outputs.push_back(tape.constant(std::span<const T>(state.outputs[t])));
  }
  auto read = memory_step(tape, tape.constant(pair_repr), mem, params);
  auto copy = [](ad::Var<T> v) { return std::vector<T>(v.value().begin(), v.value().end()); };
  state.keys.push_back(copy(mem.keys.back()));
  state.outputs.push_back(copy(mem.outputs.back()));
  state.response = copy(read.response);
  state.alpha = copy(read.alpha);
  return state;
}

template <class T>
struct AggregationTrace {
  std::vector<RelationVector<T>> states;  ///< reported distributions p(z_j | X)
  std::vector<std::vector<T>> alphas;
  std::vector<std::vector<T>> gates;  ///< 49 per gated step; empty when bypassed
};

namespace detail {
template <class T>
AggregationTrace<T> to_trace(const AggregationVars<T>& vars, const AggregationOptions& opts) {
  AggregationTrace<T> tr;
  for (const auto& s : vars.states) tr.states.push_back(ops::to_relation_vector(state_distribution(s, opts)));
  for (const auto& a : vars.alphas) tr.alphas.emplace_back(a.value().begin(), a.value().end());
  for (const auto& g : vars.gate_values) tr.gates.emplace_back(g.value().begin(), g.value().end());
  return tr;
}
}  // namespace detail

/// Value-level single step with explicit gates (49 entries, or empty for bypass).
template <class T>
RelationVector<T> step_sequential(const RelationVector<T>& prev, const RelationVector<T>& projected,
                                  std::span<const T> gate_values, bool softmax_scores = false) {
  ad::Tape<T> tape(false);
  std::optional<ad::Var<T>> g;
  if (!gate_values.empty()) g = tape.constant(gate_values);
  auto s = step_sequential(tape.constant(std::span<const T>(prev)),
                           tape.constant(std::span<const T>(projected)), g,
                           AggregationOptions{!gate_values.empty(), softmax_scores});
  return ops::to_relation_vector(s);
}

template <class T>
AggregationTrace<T> run_sequential(const std::vector<RelationVector<T>>& projected,
                                   const std::vector<std::vector<T>>& pair_reprs,
                                   AggregationParams<T>& params, const AggregationOptions& opts) {
  ad::Tape<T> tape(false);
  std::vector<ad::Var<T>> p, x;
  for (const auto& v : projected) p.push_back(tape.constant(std::span<const T>(v)));
  for (const auto& v : pair_reprs) x.push_back(tape.constant(std::span<const T>(v)));
  return detail::to_trace(run_sequential(tape, p, x, params, opts), opts);
}

template <class T>
AggregationTrace<T> run_tree(const ParseTree& tree, const std::vector<RelationVector<T>>& projected,
                             const std::vector<std::vector<T>>& pair_reprs,
                             AggregationParams<T>& params, const AggregationOptions& opts) {
  ad::Tape<T> tape(false);
  std::vector<ad::Var<T>> p, x;
  for (const auto& v : projected) p.push_back(tape.constant(std::span<const T>(v)));
  for (const auto& v : pair_reprs) x.push_back(tape.constant(std::span<const T>(v)));
  return detail::to_trace(run_tree(tape, tree, p, x, params, opts), opts);
}

}  // namespace natlog
