#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/autodiff.hpp"
#include "natlog/error.hpp"
#include "natlog/polarity.hpp"
#include "natlog/relation.hpp"

namespace natlog {

enum class AggregationMode : std::uint8_t { Sequential, Tree };
enum class Mode : std::uint8_t { Train, Eval };

/// Architecture and regularisation settings. Persisted in checkpoints.
struct ModelConfig {
  std::size_t embed_dim = 64;  ///< d: embedding size and encoder output size
  std::size_t hidden_dim = 64;  ///< hidden width of the memory feed-forward maps
  std::size_t encoder_layers = 1;
  double dropout = 0.5;
  std::uint64_t seed = 13;
  std::size_t memory_dim = 0;  ///< d_m; 0 means "same as embed_dim"
  bool residual = false;  ///< add each token's embedding to its encoder output

  bool equivalence_constraint = true;
  bool collapse_constraint = true;
  bool use_gates = true;  ///< false bypasses the memory-conditioned gates (all gates = 1)
  AggregationMode aggregation = AggregationMode::Sequential;
  bool softmax_scores = false;  ///< report softmax(s_j) instead of renormalised scores
  Grouping grouping = Grouping::Max;

  std::size_t d() const noexcept { return embed_dim; }
  std::size_t dm() const noexcept { return memory_dim ? memory_dim : embed_dim; }

  void validate() const {
    if (embed_dim == 0 || hidden_dim == 0 || encoder_layers == 0)
      throw ContractViolation("model dimensions must be positive");
    if (embed_dim % 2 != 0)
      throw ContractViolation("embed_dim must be even (two encoder directions of d/2)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractViolation("dropout must be in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim},
       {"encoder_layers", c.encoder_layers},
       {"dropout", c.dropout},
       {"seed", c.seed},
       {"memory_dim", c.memory_dim},
       {"residual", c.residual},
       {"equivalence_constraint", c.equivalence_constraint},
       {"collapse_constraint", c.collapse_constraint},
       {"use_gates", c.use_gates},
       {"aggregation", c.aggregation == AggregationMode::Tree ? "tree" : "seq"},
       {"softmax_scores", c.softmax_scores},
       {"grouping", c.grouping == Grouping::Sum ? "sum" : "max"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig def;
  c.embed_dim = j.value("embed_dim", def.embed_dim);
  c.hidden_dim = j.value("hidden_dim", def.hidden_dim);
  c.encoder_layers = j.value("encoder_layers", def.encoder_layers);
  c.dropout = j.value("dropout", def.dropout);
  c.seed = j.value("seed", def.seed);
  c.memory_dim = j.value("memory_dim", def.memory_dim);
  c.residual = j.value("residual", def.residual);
  c.equivalence_constraint = j.value("equivalence_constraint", def.equivalence_constraint);
  c.collapse_constraint = j.value("collapse_constraint", def.collapse_constraint);
  c.use_gates = j.value("use_gates", def.use_gates);
  const std::string agg = j.value("aggregation", std::string("seq"));
  if (agg != "seq" && agg != "tree") throw ParseError("aggregation must be seq or tree");
  c.aggregation = agg == "tree" ? AggregationMode::Tree : AggregationMode::Sequential;
  c.softmax_scores = j.value("softmax_scores", def.softmax_scores);
  const std::string grp = j.value("grouping", std::string("max"));
  if (grp != "max" && grp != "sum") throw ParseError("grouping must be max or sum");
  c.grouping = grp == "sum" ? Grouping::Sum : Grouping::Max;
  c.validate();
}

// ---------------------------------------------------------------------------

/// Word list with <unk> at index 0. Lookups are case-insensitive.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;

  Vocabulary() { add("<unk>"); }

  std::size_t add(const std::string& word) {
    const std::string w = lowercase(word);
    if (auto it = index_.find(w); it != index_.end()) return it->second;
    index_.emplace(w, words_.size());
    words_.push_back(w);
    return words_.size() - 1;
  }

  std::size_t id(const std::string& word) const {
    auto it = index_.find(lowercase(word));
    return it == index_.end() ? kUnk : it->second;
  }

  std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  /// One token per line; line 0 must be <unk>.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path);
    for (const auto& w : words_) out << w << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocabulary " + path);
    std::vector<std::string> words;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) words.push_back(line);
    return from_words(words);
  }

  static Vocabulary from_words(const std::vector<std::string>& words) {
    if (words.empty() || words[0] != "<unk>")
      throw ValidationError("vocabulary must start with <unk>");
    Vocabulary v;
    for (std::size_t i = 1; i < words.size(); ++i) v.add(words[i]);
    if (v.size() != words.size()) throw ValidationError("vocabulary has duplicate entries");
    return v;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------

template <class T>
void init_uniform(ad::Parameter<T>& p, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& x : p.value) x = static_cast<T>(dist(rng));
}

template <class T>
std::vector<T> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
  std::vector<T> mask(n);
  std::bernoulli_distribution keep(1.0 - rate);
  const T inv = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = keep(rng) ? inv : T(0);
  return mask;
}

template <class T>
ad::Var<T> apply_dropout(ad::Var<T> x, double rate, std::mt19937_64* rng) {
  if (!rng || rate <= 0.0) return x;
  auto mask = x.tape()->constant(x.rows(), x.cols(), dropout_mask<T>(x.size(), rate, *rng));
  return ad::mul(x, mask);
}

/// Interface for sentence encoders: token ids -> one d-dim vector per token.
template <class T>
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  /// `rng` is non-null only in training mode (dropout on).
  virtual std::vector<ad::Var<T>> encode(ad::Tape<T>& tape, const std::vector<std::size_t>& ids,
                                         std::mt19937_64* rng) = 0;
  virtual std::vector<ad::Parameter<T>*> parameters() = 0;
  virtual std::size_t output_dim() const = 0;
};

/// Trainable embeddings followed by a stack of bidirectional LSTM layers, each
/// direction of width d/2 so the concatenated output has width d.
template <class T>
class BiLstmEncoder final : public SentenceEncoder<T> {
 public:
  struct Direction {
    ad::Parameter<T> weight;  // 4h x (in + h), gate order i, f, g, o
    ad::Parameter<T> bias;    // 4h
  };

  BiLstmEncoder(const ModelConfig& cfg, std::size_t vocab_size)
      : cfg_(cfg), embedding_("embedding", vocab_size, cfg.d()) {
    const std::size_t h = cfg.d() / 2;
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string prefix = "encoder.l" + std::to_string(l) + "." + dir;
        Direction d{ad::Parameter<T>(prefix + ".weight", 4 * h, cfg.d() + h),
                    ad::Parameter<T>(prefix + ".bias", 4 * h, 1)};
        (std::string(dir) == "fwd" ? fwd_ : bwd_).push_back(std::move(d));
      }
    }
  }

  void initialize(std::mt19937_64& rng) {
    init_uniform(embedding_, rng, 0.5);
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d() / 2));
    const std::size_t h = cfg_.d() / 2;
    for (auto* layers : {&fwd_, &bwd_})
      for (auto& dir : *layers) {
        init_uniform(dir.weight, rng, s);
        init_uniform(dir.bias, rng, s);
        for (std::size_t k = h; k < 2 * h; ++k) dir.bias.value[k] += T(1);  // forget gate
      }
  }

  std::vector<ad::Var<T>> encode(ad::Tape<T>& tape, const std::vector<std::size_t>& ids,
                                 std::mt19937_64* rng) override {
    if (ids.empty()) throw ContractViolation("encode: empty token sequence");
    std::vector<ad::Var<T>> xs;
    xs.reserve(ids.size());
    for (std::size_t id : ids) {
      if (id >= embedding_.rows) throw ContractViolation("encode: token id outside vocabulary");
      xs.push_back(apply_dropout(tape.param_row(embedding_, id), cfg_.dropout, rng));
    }
    const auto embedded = xs;
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      auto f = run_direction(tape, fwd_[l], xs, false);
      auto b = run_direction(tape, bwd_[l], xs, true);
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = ad::concat(f[i], b[i]);
    }
    if (cfg_.residual)
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = ad::add(xs[i], embedded[i]);
    for (auto& x : xs) x = apply_dropout(x, cfg_.dropout, rng);
    return xs;
  }

  std::vector<ad::Parameter<T>*> parameters() override {
    std::vector<ad::Parameter<T>*> out{&embedding_};
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      out.push_back(&fwd_[l].weight);
      out.push_back(&fwd_[l].bias);
      out.push_back(&bwd_[l].weight);
      out.push_back(&bwd_[l].bias);
    }
    return out;
  }

  std::size_t output_dim() const override { return cfg_.d(); }
  ad::Parameter<T>& embedding() noexcept { return embedding_; }

 private:
  std::vector<ad::Var<T>> run_direction(ad::Tape<T>& tape, Direction& dir,
                                        const std::vector<ad::Var<T>>& xs, bool reverse) {
    const std::size_t h = cfg_.d() / 2;
    const std::size_t n = xs.size();
    auto w = tape.param(dir.weight);
    auto b = tape.param(dir.bias);
    auto hprev = tape.constant(h, 1, std::vector<T>(h, T(0)));
    auto cprev = tape.constant(h, 1, std::vector<T>(h, T(0)));
    std::vector<ad::Var<T>> out(n);
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t i = reverse ? n - 1 - step : step;
      auto pre = ad::add(ad::matvec(w, ad::concat(xs[i], hprev)), b);
      auto hc = ad::lstm_cell(pre, cprev);
      hprev = ad::slice(hc, 0, h);
      cprev = ad::slice(hc, h, h);
      out[i] = hprev;
    }
    return out;
  }

  ModelConfig cfg_;
  ad::Parameter<T> embedding_;
  std::vector<Direction> fwd_;
  std::vector<Direction> bwd_;
};

// ---------------------------------------------------------------------------
// Cross-sentence attention

template <class T>
struct EncodedSentence {
  std::vector<std::string> tokens;
  std::vector<std::vector<T>> vectors;
};

template <class T>
struct AlignmentResult {
  std::vector<std::vector<T>> attention;  ///< m x n raw scores e_ij
  std::vector<std::vector<T>> weights;    ///< m x n column-softmax of attention
  std::vector<std::vector<T>> summaries;  ///< n aligned premise summaries
  std::vector<bool> hard_indicator;       ///< φ_j
};

/// Tape-level view of the alignment, used inside the differentiable pipeline.
template <class T>
struct AlignmentVars {
  ad::Var<T> scores;   // m x n
  ad::Var<T> weights;  // m x n
  std::vector<ad::Var<T>> summaries;
  std::vector<bool> hard_indicator;
};

/// Index of the premise token with the highest score in column j; ties go to the lowest index.
template <class T>
std::size_t column_argmax(std::span<const T> scores, std::size_t m, std::size_t n, std::size_t j) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (scores[i * n + j] > scores[best * n + j]) best = i;
  return best;
}

template <class T>
AlignmentVars<T> attend(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& premise,
                        const std::vector<std::string>& premise_tokens,
                        const std::vector<ad::Var<T>>& hypothesis,
                        const std::vector<std::string>& hypothesis_tokens) {
  (void)tape;
  if (premise.empty() || hypothesis.empty()) throw ContractViolation("attend: empty sentence");
  if (premise.size() != premise_tokens.size() || hypothesis.size() != hypothesis_tokens.size())
    throw ContractViolation("attend: tokens and vectors disagree in length");
  const std::size_t m = premise.size(), n = hypothesis.size();
  auto a = ad::stack_rows<T>(premise);
  auto b = ad::stack_rows<T>(hypothesis);
  AlignmentVars<T> out;
  out.scores = ad::matmul_nt(a, b);
  out.weights = ad::softmax_cols(out.scores);
  auto summaries = ad::matmul_tn(out.weights, a);  // n x d
  for (std::size_t j = 0; j < n; ++j) out.summaries.push_back(ad::row(summaries, j));
  auto sv = out.scores.value();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = column_argmax<T>(sv, m, n, j);
    out.hard_indicator.push_back(lowercase(premise_tokens[i]) == lowercase(hypothesis_tokens[j]));
  }
  return out;
}

namespace detail {
template <class T>
std::vector<std::vector<T>> to_rows(std::span<const T> flat, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<T>> out(rows, std::vector<T>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i][j] = flat[i * cols + j];
  return out;
}
}  // namespace detail

/// Value-level attention between two encoded sentences.
template <class T>
AlignmentResult<T> attend(const EncodedSentence<T>& premise, const EncodedSentence<T>& hypothesis) {
  ad::Tape<T> tape(false);
  std::vector<ad::Var<T>> a, b;
  for (const auto& v : premise.vectors) a.push_back(tape.constant(std::span<const T>(v)));
  for (const auto& v : hypothesis.vectors) b.push_back(tape.constant(std::span<const T>(v)));
  auto vars = attend(tape, a, premise.tokens, b, hypothesis.tokens);
  const std::size_t m = a.size(), n = b.size();
  AlignmentResult<T> out;
  out.attention = detail::to_rows<T>(vars.scores.value(), m, n);
  out.weights = detail::to_rows<T>(vars.weights.value(), m, n);
  for (const auto& s : vars.summaries)
    out.summaries.emplace_back(s.value().begin(), s.value().end());
  out.hard_indicator = vars.hard_indicator;
  return out;
}

/// Value-level encoding. Deterministic in eval mode; train mode draws dropout masks from `rng`.
template <class T>
EncodedSentence<T> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                          SentenceEncoder<T>& encoder, Mode mode = Mode::Eval,
                          std::mt19937_64* rng = nullptr) {
  if (tokens.empty()) throw ContractViolation("encode: empty token sequence");
  ad::Tape<T> tape(false);
  auto vars = encoder.encode(tape, vocab.ids(tokens), mode == Mode::Train ? rng : nullptr);
  EncodedSentence<T> out;
  out.tokens = tokens;
  for (const auto& v : vars) out.vectors.emplace_back(v.value().begin(), v.value().end());
  return out;
}

}  // namespace natlog
