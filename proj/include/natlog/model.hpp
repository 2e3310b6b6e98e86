#pragma once

#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/aggregation.hpp"
#include "natlog/autodiff.hpp"
#include "natlog/encoder.hpp"
#include "natlog/local_relations.hpp"
#include "natlog/polarity.hpp"
#include "natlog/relation.hpp"
#include "natlog/soft_ops.hpp"

namespace natlog {

/// A premise paired with a polarity-annotated hypothesis.
struct ModelInput {
  std::vector<std::string> premise;
  AnnotatedSentence hypothesis;
};

template <class T>
struct ForwardVars {
  AlignmentVars<T> alignment;
  LocalVars<T> local;
  AggregationVars<T> aggregation;
  ad::Var<T> grouped;  ///< max of the final state within each label group
  ad::Var<T> logits;   ///< label logits fed to the softmax
};

/// Smallest grouped score mapped to a finite logit.
template <class T>
inline constexpr T kLogitFloor = std::is_same_v<T, float> ? T(1e-30) : T(1e-300);

template <class T>
struct Trace {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  std::vector<std::vector<T>> attention;
  std::vector<bool> phi;
  std::vector<RelationVector<T>> local_dists;
  std::vector<RelationVector<T>> projected_dists;
  AggregationTrace<T> aggregation;
  bool gates_used = false;
  bool tree = false;
};

template <class T>
struct Prediction {
  NliLabel label = NliLabel::Neutral;
  std::array<T, kNumLabels> probs{};
  Trace<T> trace;
};

template <class T>
class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab)
      : config_(std::move(config)),
        vocab_(std::move(vocab)),
        encoder_(config_, vocab_.size()),
        bilinear_(config_.d()),
        aggregation_(2 * config_.d(), config_.hidden_dim, config_.dm()) {
    config_.validate();
  }

  /// Random initialisation from config.seed.
  void initialize() {
    std::mt19937_64 rng(config_.seed);
    encoder_.initialize(rng);
    bilinear_.initialize(rng);
    aggregation_.initialize(rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& mutable_config() noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  BiLstmEncoder<T>& encoder() noexcept { return encoder_; }
  BilinearParams<T>& bilinear() noexcept { return bilinear_; }
  AggregationParams<T>& aggregation() noexcept { return aggregation_; }

  /// Every parameter in a fixed order (also the checkpoint order).
  std::vector<ad::Parameter<T>*> parameters() {
    std::vector<ad::Parameter<T>*> out;
    for (auto& [name, group] : parameter_groups())
      for (auto* p : group) out.push_back(p);
    return out;
  }

  std::vector<std::pair<std::string, std::vector<ad::Parameter<T>*>>> parameter_groups() {
    auto enc = encoder_.parameters();
    std::vector<ad::Parameter<T>*> embeddings{enc.front()};
    std::vector<ad::Parameter<T>*> encoder(enc.begin() + 1, enc.end());
    return {{"embeddings", embeddings},
            {"encoder", encoder},
            {"bilinear", bilinear_.parameters()},
            {"gates", aggregation_.gate_parameters()},
            {"memory", aggregation_.memory_parameters()}};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  LocalOptions local_options() const {
    return {config_.equivalence_constraint, config_.collapse_constraint};
  }
  AggregationOptions aggregation_options() const {
    return {config_.use_gates, config_.softmax_scores};
  }

  /// Full differentiable forward pass. `rng` non-null enables dropout.
  ForwardVars<T> forward(ad::Tape<T>& tape, const ModelInput& input, std::mt19937_64* rng = nullptr) {
    const auto& hyp = input.hypothesis;
    hyp.validate();
    if (input.premise.empty() || hyp.size() == 0) throw ContractViolation("empty sentence");
    auto a = encoder_.encode(tape, vocab_.ids(input.premise), rng);
    auto b = encoder_.encode(tape, vocab_.ids(hyp.tokens), rng);

    ForwardVars<T> out;
    out.alignment = attend(tape, a, input.premise, b, hyp.tokens);
    auto b_matrix = ad::stack_rows<T>(b);
    out.local = local_pipeline(tape, out.alignment, b_matrix, hyp, bilinear_, local_options());

    std::vector<ad::Var<T>> reprs;
    if (config_.use_gates)
      for (std::size_t j = 0; j < b.size(); ++j)
        reprs.push_back(ad::concat(out.alignment.summaries[j], b[j]));

    const auto aopts = aggregation_options();
    if (config_.aggregation == AggregationMode::Tree) {
      const ParseTree tree = hyp.parse ? *hyp.parse : binarize(flat_tree(hyp.size()));
      out.aggregation = run_tree(tape, tree, out.local.projected, reprs, aggregation_, aopts);
    } else {
      out.aggregation = run_sequential(tape, out.local.projected, reprs, aggregation_, aopts);
    }
    out.grouped = ops::group_to_nli(out.aggregation.final_state, config_.grouping);
    // A renormalised state is softmax(log s), so its logits are log s and the
    // grouped logits are the logs of the grouped scores. Raw scores are logits already.
    out.logits = config_.softmax_scores ? out.grouped : ad::log_floor(out.grouped, kLogitFloor<T>);
    return out;
  }

  /// Cross-entropy of the grouped prediction against `gold`.
  ad::Var<T> loss(const ForwardVars<T>& fw, NliLabel gold) {
    return ad::softmax_nll(fw.logits, static_cast<std::size_t>(gold));
  }

  Prediction<T> predict(const ModelInput& input) {
    ad::Tape<T> tape(false);
    auto fw = forward(tape, input, nullptr);
    return make_prediction(fw, input);
  }

  template <class U>
  Model<U> cast() const {
    Model<U> out(config_, vocab_);
    auto src = const_cast<Model*>(this)->parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t k = 0; k < src[i]->size(); ++k)
        dst[i]->value[k] = static_cast<U>(src[i]->value[k]);
    return out;
  }

  Prediction<T> make_prediction(const ForwardVars<T>& fw, const ModelInput& input) const {
    Prediction<T> pred;
    std::array<T, kNumLabels> z{};
    for (std::size_t y = 0; y < kNumLabels; ++y) z[y] = fw.logits[y];
    T mx = std::max({z[0], z[1], z[2]});
    T total = T(0);
    for (std::size_t y = 0; y < kNumLabels; ++y) total += (pred.probs[y] = std::exp(z[y] - mx));
    for (auto& p : pred.probs) p /= total;
    pred.label = decide_label(z);

    Trace<T>& tr = pred.trace;
    tr.premise = input.premise;
    tr.hypothesis = input.hypothesis.tokens;
    const std::size_t m = input.premise.size(), n = input.hypothesis.size();
    tr.attention = detail::to_rows<T>(fw.alignment.scores.value(), m, n);
    tr.phi = fw.alignment.hard_indicator;
    for (const auto& p : fw.local.local) tr.local_dists.push_back(ops::to_relation_vector(p));
    for (const auto& p : fw.local.projected) tr.projected_dists.push_back(ops::to_relation_vector(p));
    tr.aggregation = detail::to_trace(fw.aggregation, aggregation_options());
    tr.gates_used = config_.use_gates;
    tr.tree = config_.aggregation == AggregationMode::Tree;
    return pred;
  }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  BiLstmEncoder<T> encoder_;
  BilinearParams<T> bilinear_;
  AggregationParams<T> aggregation_;
};

// ---------------------------------------------------------------------------
// Trace serialisation

template <class T>
nlohmann::json relation_rows(const std::vector<RelationVector<T>>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back(std::vector<double>(r.begin(), r.end()));
  return out;
}

template <class T>
nlohmann::json trace_to_json(const Trace<T>& tr) {
  nlohmann::json j;
  std::vector<std::string> axis;
  for (Relation r : kAllRelations) axis.emplace_back(to_token(r));
  j["relations"] = axis;
  j["premise"] = tr.premise;
  j["hypothesis"] = tr.hypothesis;
  nlohmann::json att = nlohmann::json::array();
  for (const auto& row : tr.attention) att.push_back(std::vector<double>(row.begin(), row.end()));
  j["attention"] = att;
  j["phi"] = tr.phi;
  j["local_dists"] = relation_rows(tr.local_dists);
  j["projected_dists"] = relation_rows(tr.projected_dists);
  j["states"] = relation_rows(tr.aggregation.states);
  j["aggregation"] = tr.tree ? "tree" : "seq";
  j["gates_used"] = tr.gates_used;
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : tr.aggregation.gates) gates.push_back(std::vector<double>(g.begin(), g.end()));
  j["gates"] = gates;
  nlohmann::json alpha = nlohmann::json::array();
  for (const auto& a : tr.aggregation.alphas) alpha.push_back(std::vector<double>(a.begin(), a.end()));
  j["alpha"] = alpha;
  std::vector<std::string> path;
  for (const auto& s : tr.aggregation.states) path.emplace_back(to_token(argmax(s)));
  j["path"] = path;
  return j;
}

/// Checks the trace fields, their shapes and that every state row is a distribution.
inline void validate_trace_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ValidationError(std::string("trace is missing '") + key + "'");
    return j.at(key);
  };
  const auto& hyp = need("hypothesis");
  const auto& prem = need("premise");
  const std::size_t n = hyp.size(), m = prem.size();
  const auto& att = need("attention");
  if (att.size() != m) throw ValidationError("attention must have one row per premise token");
  for (const auto& row : att)
    if (row.size() != n) throw ValidationError("attention rows must have one entry per hypothesis token");
  for (const char* key : {"local_dists", "projected_dists"}) {
    const auto& rows = need(key);
    if (rows.size() != n) throw ValidationError(std::string(key) + " must have n rows");
    for (const auto& r : rows)
      if (r.size() != kNumRelations) throw ValidationError(std::string(key) + " rows need 7 entries");
  }
  for (const auto& r : need("states")) {
    if (r.size() != kNumRelations) throw ValidationError("state rows need 7 entries");
    double total = 0;
    for (const auto& x : r) total += x.get<double>();
    if (std::abs(total - 1.0) > 1e-4) throw ValidationError("state row does not sum to 1");
  }
  if (!need("gates_used").is_boolean()) throw ValidationError("gates_used must be boolean");
  if (!need("alpha").is_array()) throw ValidationError("alpha must be an array");
  if (need("relations").size() != kNumRelations) throw ValidationError("relations axis needs 7 labels");
}

}  // namespace natlog
