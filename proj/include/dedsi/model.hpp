#pragma once

#include <cmath>
#include <concepts>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dedsi/common.hpp"
#include "dedsi/vocab.hpp"

namespace dedsi {

/// One teacher-forcing example: encoded query tokens and the docid's
/// identifier symbols (without the trailing boundary).
struct Example {
  EncodedQuery query;
  std::vector<int> target;
};

inline std::vector<Example> encode_pairs(const Vocabulary& vocab, const std::vector<QueryDocPair>& pairs) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({vocab.encode_query(p.query), vocab.encode_docid(p.docid)});
  return out;
}

// ---------------------------------------------------------------------------
// Model concepts
// ---------------------------------------------------------------------------

/// Autoregressive scorer over decoder symbols (0 = boundary/EOS).
template <typename M>
concept SequenceModel = requires(const M& m, const typename M::State& s, const EncodedQuery& query, int symbol) {
  typename M::State;
  { m.id_symbols() } -> std::convertible_to<std::size_t>;
  { m.start(query) } -> std::same_as<typename M::State>;
  { m.log_probs(s) } -> std::same_as<std::vector<double>>;
  { m.advance(s, symbol) } -> std::same_as<typename M::State>;
};

template <typename M>
concept TrainableModel = SequenceModel<M> && requires(M& m, std::span<const Example> batch) {
  { m.train_batch(batch) } -> std::convertible_to<double>;
};

/// A trainable model that also carries its vocabulary, so raw query strings
/// and docid texts can be mapped to and from symbols.
template <typename M>
concept RetrieverModel = TrainableModel<M> && requires(const M& m) {
  { m.vocab() } -> std::same_as<const Vocabulary&>;
  { m.max_id_len() } -> std::convertible_to<std::size_t>;
};

// ---------------------------------------------------------------------------
// Reference encoder-decoder
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t encoder_layers = 2;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 5.0;
  double embedding_init = 0.1;
  std::uint64_t seed = 1;
};

inline Json to_json(const ModelConfig& c) {
  return {{"architecture", "bag-encoder/recurrent-decoder"},
          {"dim", c.dim},
          {"encoder_layers", c.encoder_layers},
          {"optimizer", "adam"},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"grad_clip", c.grad_clip},
          {"init", "uniform: embeddings +-embedding_init, dense +-sqrt(6/(fan_in+fan_out)), biases 0"},
          {"embedding_init", c.embedding_init},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const Json& j, ModelConfig c = {}) {
  c.dim = j.value("dim", c.dim);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.embedding_init = j.value("embedding_init", c.embedding_init);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Named list of dense tensors; gradients and optimizer moments reuse the
/// layout of the parameters they belong to.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> tensors;

  ParamSet zeros_like() const {
    ParamSet z;
    z.names = names;
    for (const auto& t : tensors) z.tensors.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    return z;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& t : tensors) s += t.squaredNorm();
    return s;
  }

  std::uint64_t hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : tensors) h = fnv1a64_bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()), h);
    return h;
  }
};

inline Json to_json(const ParamSet& p) {
  Json j = Json::object();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& t = p.tensors[i];
    j[p.names[i]] = {{"rows", t.rows()},
                     {"cols", t.cols()},
                     {"data", std::vector<double>(t.data(), t.data() + t.size())}};
  }
  return j;
}

inline void load_into(ParamSet& p, const Json& j) {
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& e = j.at(p.names[i]);
    auto& t = p.tensors[i];
    if (e.at("rows").get<Eigen::Index>() != t.rows() || e.at("cols").get<Eigen::Index>() != t.cols()) {
      throw Error(concat("tensor '", p.names[i], "' has mismatched shape"));
    }
    auto data = e.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(t.size())) throw Error(concat("tensor '", p.names[i], "' truncated"));
    std::copy(data.begin(), data.end(), t.data());
  }
}

/// Desk-scale query -> docid model.
///
/// Encoder: weighted mean of query-token embeddings followed by `encoder_layers`
/// dense tanh layers. Decoder: a tanh recurrent cell whose pre-activation
/// adds the recurrent state, the previous symbol's embedding, a learned
/// position embedding and a projection of the encoder output; a linear
/// layer plus softmax gives the next-symbol distribution.
/// Training minimizes mean per-token cross-entropy with Adam.
class ReferenceModel {
 public:
  struct State {
    Eigen::VectorXd hidden;
    Eigen::VectorXd context;
    std::size_t position = 0;
  };

  ReferenceModel(std::shared_ptr<const Vocabulary> vocab, std::size_t max_id_len, ModelConfig cfg)
      : vocab_(std::move(vocab)), cfg_(cfg), max_id_len_(max_id_len) {
    if (!vocab_) throw Error("ReferenceModel: null vocabulary");
    if (cfg_.dim == 0) throw Error("ReferenceModel: dim must be >= 1");
    const auto d = static_cast<Eigen::Index>(cfg_.dim);
    const auto nq = static_cast<Eigen::Index>(vocab_->query_size());
    const auto ns = static_cast<Eigen::Index>(vocab_->id_symbols());
    const auto np = static_cast<Eigen::Index>(max_id_len_ + 1);

    Rng rng(derive_seed(cfg_.seed, "model_init"));
    auto uniform = [&](Eigen::Index r, Eigen::Index c, double a) {
      Eigen::MatrixXd m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform_real(rng) - 1.0) * a;
      return m;
    };
    auto xavier = [&](Eigen::Index r, Eigen::Index c) {
      return uniform(r, c, std::sqrt(6.0 / static_cast<double>(r + c)));
    };
    const double e = cfg_.embedding_init;
    add("query_embedding", uniform(d, nq, e));
    add("context_weight", xavier(d, d));
    add("context_bias", Eigen::MatrixXd::Zero(d, 1));
    add("recurrent_weight", xavier(d, d));
    add("symbol_embedding", uniform(d, ns, e));
    add("position_embedding", uniform(d, np, e));
    add("output_weight", xavier(ns, d));
    add("output_bias", Eigen::MatrixXd::Zero(ns, 1));
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      add(concat("encoder_weight_", l), xavier(d, d));
      add(concat("encoder_bias_", l), Eigen::MatrixXd::Zero(d, 1));
    }
    m_ = params_.zeros_like();
    v_ = params_.zeros_like();
  }

  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> shared_vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t max_id_len() const { return max_id_len_; }
  std::size_t id_symbols() const { return vocab_->id_symbols(); }
  std::size_t steps_taken() const { return steps_; }

  ParamSet& parameters() { return params_; }
  const ParamSet& parameters() const { return params_; }
  std::uint64_t parameter_hash() const { return params_.hash(); }

  // -- inference -----------------------------------------------------------

  State start(const EncodedQuery& query) const {
    State s;
    s.context = context_of(encode(query).back());
    s.position = 0;
    s.hidden = (P(kSymEmb).col(0) + P(kPosEmb).col(0) + s.context).array().tanh();
    return s;
  }

  std::vector<double> log_probs(const State& s) const {
    Eigen::VectorXd logits = P(kOutW) * s.hidden + P(kOutB).col(0);
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    std::vector<double> out(static_cast<std::size_t>(logits.size()));
    for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = logits(i) - lse;
    return out;
  }

  State advance(const State& s, int symbol) const {
    check_symbol(symbol);
    State n;
    n.context = s.context;
    n.position = std::min(s.position + 1, max_id_len_);
    n.hidden = (P(kRecW) * s.hidden + P(kSymEmb).col(symbol) + P(kPosEmb).col(static_cast<Eigen::Index>(n.position)) +
                s.context)
                   .array()
                   .tanh();
    return n;
  }

  // -- training ------------------------------------------------------------

  /// Mean per-token cross-entropy of `batch` and its gradient, without
  /// touching the parameters.
  std::pair<double, ParamSet> loss_and_gradients(std::span<const Example> batch) const {
    ParamSet grad = params_.zeros_like();
    std::size_t tokens = 0;
    for (const auto& ex : batch) tokens += ex.target.size() + 1;
    if (tokens == 0) throw Error("loss_and_gradients: empty batch");
    const double scale = 1.0 / static_cast<double>(tokens);
    double loss = 0.0;
    for (const auto& ex : batch) loss += accumulate_example(ex, scale, grad);
    return {loss * scale, std::move(grad)};
  }

  /// One Adam step on the batch; returns the loss measured before the step.
  double train_batch(std::span<const Example> batch) {
    auto [loss, grad] = loss_and_gradients(batch);
    const double norm = std::sqrt(grad.squared_norm());
    const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const double lr = cfg_.learning_rate * std::sqrt(bc2) / bc1;
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
      auto g = grad.tensors[i].array() * clip;
      auto& m = m_.tensors[i];
      auto& v = v_.tensors[i];
      m.array() = cfg_.beta1 * m.array() + (1.0 - cfg_.beta1) * g;
      v.array() = cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * g.square();
      params_.tensors[i].array() -= lr * m.array() / (v.array().sqrt() + cfg_.epsilon);
    }
    return loss;
  }

  // -- persistence ---------------------------------------------------------

  Json to_json(bool with_optimizer_state) const {
    Json j = {{"config", dedsi::to_json(cfg_)},
              {"max_id_len", max_id_len_},
              {"vocab", dedsi::to_json(*vocab_)},
              {"params", dedsi::to_json(params_)},
              {"steps", steps_}};
    if (with_optimizer_state) j["optimizer"] = {{"m", dedsi::to_json(m_)}, {"v", dedsi::to_json(v_)}};
    return j;
  }

  static ReferenceModel from_json(const Json& j, std::shared_ptr<const Vocabulary> vocab = nullptr) {
    auto v = vocabulary_from_json(j.at("vocab"));
    if (!vocab || !(*vocab == v)) vocab = std::make_shared<const Vocabulary>(std::move(v));
    ReferenceModel m(std::move(vocab), j.at("max_id_len").get<std::size_t>(), model_config_from_json(j.at("config")));
    load_into(m.params_, j.at("params"));
    m.steps_ = j.value("steps", std::size_t{0});
    if (j.contains("optimizer")) {
      load_into(m.m_, j.at("optimizer").at("m"));
      load_into(m.v_, j.at("optimizer").at("v"));
    }
    return m;
  }

 private:
  enum Slot : std::size_t { kQEmb, kCtxW, kCtxB, kRecW, kSymEmb, kPosEmb, kOutW, kOutB, kEncBase };

  void add(std::string name, Eigen::MatrixXd t) {
    params_.names.push_back(std::move(name));
    params_.tensors.push_back(std::move(t));
  }

  const Eigen::MatrixXd& P(std::size_t slot) const { return params_.tensors[slot]; }
  const Eigen::MatrixXd& enc_w(std::size_t l) const { return params_.tensors[kEncBase + 2 * l]; }
  const Eigen::MatrixXd& enc_b(std::size_t l) const { return params_.tensors[kEncBase + 2 * l + 1]; }

  void check_symbol(int symbol) const {
    if (symbol < 0 || static_cast<std::size_t>(symbol) >= vocab_->id_symbols()) throw Error("symbol out of range");
  }

  void check_query(const EncodedQuery& query) const {
    if (query.empty() || query.weights.size() != query.tokens.size()) throw Error("malformed encoded query");
    for (int t : query.tokens)
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_->query_size()) throw Error("query token out of range");
  }

  /// Activations of every encoder layer; front() is the pooled embedding.
  std::vector<Eigen::VectorXd> encode(const EncodedQuery& query) const {
    check_query(query);
    std::vector<Eigen::VectorXd> acts;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.dim));
    for (std::size_t i = 0; i < query.size(); ++i) x += query.weights[i] * P(kQEmb).col(query.tokens[i]);
    acts.push_back(std::move(x));
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      Eigen::VectorXd h = (enc_w(l) * acts.back() + enc_b(l).col(0)).array().tanh();
      acts.push_back(std::move(h));
    }
    return acts;
  }

  Eigen::VectorXd context_of(const Eigen::VectorXd& h) const { return P(kCtxW) * h + P(kCtxB).col(0); }

  double accumulate_example(const Example& ex, double scale, ParamSet& g) const {
    if (ex.target.size() > max_id_len_) throw Error("docid longer than the model's maximum identifier length");
    for (int s : ex.target)
      if (s <= 0) throw Error("target symbol out of range");
    const auto acts = encode(ex.query);
    const Eigen::VectorXd ctx = context_of(acts.back());
    const auto steps = static_cast<Eigen::Index>(ex.target.size() + 1);
    const auto d = static_cast<Eigen::Index>(cfg_.dim);

    auto input_at = [&](Eigen::Index t) { return t == 0 ? 0 : ex.target[static_cast<std::size_t>(t - 1)]; };
    auto output_at = [&](Eigen::Index t) {
      return t + 1 == steps ? 0 : ex.target[static_cast<std::size_t>(t)];
    };

    Eigen::MatrixXd hidden(d, steps);
    Eigen::MatrixXd dlogits(static_cast<Eigen::Index>(vocab_->id_symbols()), steps);
    double loss = 0.0;
    for (Eigen::Index t = 0; t < steps; ++t) {
      Eigen::VectorXd a = P(kSymEmb).col(input_at(t)) + P(kPosEmb).col(t) + ctx;
      if (t > 0) a.noalias() += P(kRecW) * hidden.col(t - 1);
      hidden.col(t) = a.array().tanh();
      Eigen::VectorXd logits = P(kOutW) * hidden.col(t) + P(kOutB).col(0);
      const double mx = logits.maxCoeff();
      Eigen::VectorXd p = (logits.array() - mx).exp();
      const double z = p.sum();
      p /= z;
      const int y = output_at(t);
      loss -= logits(y) - mx - std::log(z);
      p(y) -= 1.0;
      dlogits.col(t) = p * scale;
    }

    g.tensors[kOutW].noalias() += dlogits * hidden.transpose();
    g.tensors[kOutB].col(0) += dlogits.rowwise().sum();
    Eigen::MatrixXd dhidden = P(kOutW).transpose() * dlogits;
    Eigen::VectorXd dctx = Eigen::VectorXd::Zero(d);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      Eigen::VectorXd da = dhidden.col(t).array() * (1.0 - hidden.col(t).array().square());
      if (t > 0) {
        g.tensors[kRecW].noalias() += da * hidden.col(t - 1).transpose();
        dhidden.col(t - 1).noalias() += P(kRecW).transpose() * da;
      }
      g.tensors[kSymEmb].col(input_at(t)) += da;
      g.tensors[kPosEmb].col(t) += da;
      dctx += da;
    }

    g.tensors[kCtxW].noalias() += dctx * acts.back().transpose();
    g.tensors[kCtxB].col(0) += dctx;
    Eigen::VectorXd dh = P(kCtxW).transpose() * dctx;
    for (std::size_t l = cfg_.encoder_layers; l-- > 0;) {
      Eigen::VectorXd dz = dh.array() * (1.0 - acts[l + 1].array().square());
      g.tensors[kEncBase + 2 * l].noalias() += dz * acts[l].transpose();
      g.tensors[kEncBase + 2 * l + 1].col(0) += dz;
      dh = enc_w(l).transpose() * dz;
    }
    for (std::size_t i = 0; i < ex.query.size(); ++i) g.tensors[kQEmb].col(ex.query.tokens[i]) += ex.query.weights[i] * dh;
    return loss;
  }

  std::shared_ptr<const Vocabulary> vocab_;
  ModelConfig cfg_;
  std::size_t max_id_len_ = 0;
  ParamSet params_;
  ParamSet m_;
  ParamSet v_;
  std::size_t steps_ = 0;
};

static_assert(RetrieverModel<ReferenceModel>);

/// Builds a model whose position table covers the longest docid of `corpus`.
inline ReferenceModel make_model(std::shared_ptr<const Vocabulary> vocab, const Corpus& corpus, const ModelConfig& cfg) {
  std::size_t longest = 0;
  for (const auto& d : corpus.docs) longest = std::max(longest, d.id.size());
  return ReferenceModel(std::move(vocab), longest, cfg);
}

}  // namespace dedsi
