#pragma once

#include "iat/errors.hpp"
#include "iat/params.hpp"
#include "iat/rng.hpp"
#include "iat/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace iat {

// u1 SEP u2 SEP ... un
inline TokenSeq flatten_history(DialogueHistory const &history)
{
  if (history.empty()) {
    throw PreconditionError("cannot flatten an empty dialogue history");
  }
  TokenSeq out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i > 0) {
      out.push_back(kSep);
    }
    out.insert(out.end(), history[i].begin(), history[i].end());
  }
  return out;
}

inline TokenSeq with_eos(std::span<TokenId const> tokens)
{
  TokenSeq out(tokens.begin(), tokens.end());
  out.push_back(kEos);
  return out;
}

// Strips a trailing EOS, if any.
inline Utterance without_eos(std::span<TokenId const> tokens)
{
  Utterance out(tokens.begin(), tokens.end());
  if (!out.empty() && out.back() == kEos) {
    out.pop_back();
  }
  return out;
}

// Encoder input and decoder target (EOS-terminated) for one example, by role.
struct ModelIo
{
  TokenSeq source;
  TokenSeq target;
};

inline ModelIo model_io(ModelRole role, DialogueHistory const &history, Utterance const &response)
{
  switch (role) {
  case ModelRole::Forward: return {flatten_history(history), with_eos(response)};
  case ModelRole::Backward: return {response, with_eos(flatten_history(history))};
  case ModelRole::ResponseLm: return {{}, with_eos(response)};
  }
  throw PreconditionError("unknown model role");
}

// Encoder input used when generating a response for `history`.
inline TokenSeq decoder_source(ModelRole role, DialogueHistory const &history)
{
  switch (role) {
  case ModelRole::Forward: return flatten_history(history);
  case ModelRole::ResponseLm: return {};
  case ModelRole::Backward: break;
  }
  throw PreconditionError("a backward model does not generate responses from a history");
}

struct Hypothesis
{
  TokenSeq tokens; // BOS-free; EOS-terminated unless length-capped
  double   score = 0.0;

  bool finished() const { return !tokens.empty() && tokens.back() == kEos; }
  bool operator==(Hypothesis const &) const = default;
};

namespace detail {

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline void check_ids(std::span<TokenId const> ids, std::size_t vocab_size)
{
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

template <typename Scalar>
Scalar sigmoid(Scalar x)
{
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// One cell update. z, r, n receive the gate activations.
template <typename Scalar, typename Emb>
void gru_cell(GruWeights<Scalar> const &w,
              Emb const                &x,
              Vector<Scalar> const     &h,
              Vector<Scalar>           &z,
              Vector<Scalar>           &r,
              Vector<Scalar>           &n,
              Vector<Scalar>           &h_next)
{
  auto const     H = h.size();
  Vector<Scalar> a = w.input * x.transpose() + w.bias;
  Vector<Scalar> u = w.hidden.topRows(2 * H) * h;
  z = (a.head(H) + u.head(H)).unaryExpr([](Scalar v) { return sigmoid(v); });
  r = (a.segment(H, H) + u.tail(H)).unaryExpr([](Scalar v) { return sigmoid(v); });
  Vector<Scalar> rh = r.cwiseProduct(h);
  n = (a.tail(H) + w.hidden.bottomRows(H) * rh).array().tanh().matrix();
  h_next = (Vector<Scalar>::Ones(H) - z).cwiseProduct(n) + z.cwiseProduct(h);
}

template <typename Scalar>
Vector<Scalar> gru_step(GruWeights<Scalar> const &w, Matrix<Scalar> const &emb, TokenId x, Vector<Scalar> const &h)
{
  Vector<Scalar> z, r, n, h_next;
  gru_cell(w, emb.row(x), h, z, r, n, h_next);
  return h_next;
}

template <typename Scalar>
Vector<Scalar> log_softmax(Vector<Scalar> const &logits)
{
  Scalar const m = logits.maxCoeff();
  Scalar const lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename Scalar>
Vector<Scalar> output_logits(Parameters<Scalar> const &p, Vector<Scalar> const &h)
{
  return p.output_weight.transpose() * h + p.output_bias;
}

// Activations of a recurrent pass, one column per step. h has T+1 columns,
// column 0 being the initial state.
template <typename Scalar>
struct GruTrace
{
  ColMatrix<Scalar> h, z, r, n;
};

template <typename Scalar>
GruTrace<Scalar> gru_forward(GruWeights<Scalar> const &w,
                             Matrix<Scalar> const     &emb,
                             std::span<TokenId const>  inputs,
                             Vector<Scalar> const     &h0)
{
  auto const       H = h0.size();
  auto const       T = static_cast<Eigen::Index>(inputs.size());
  GruTrace<Scalar> tr{ColMatrix<Scalar>(H, T + 1), ColMatrix<Scalar>(H, T), ColMatrix<Scalar>(H, T),
                      ColMatrix<Scalar>(H, T)};
  tr.h.col(0) = h0;
  Vector<Scalar> h = h0, z, r, n, h_next;
  for (Eigen::Index t = 0; t < T; ++t) {
    gru_cell(w, emb.row(inputs[static_cast<std::size_t>(t)]), h, z, r, n, h_next);
    tr.z.col(t) = z;
    tr.r.col(t) = r;
    tr.n.col(t) = n;
    tr.h.col(t + 1) = h_next;
    h.swap(h_next);
  }
  return tr;
}

// Backpropagation through time. dh_out holds the loss gradient w.r.t. each
// emitted state h_{t+1}; returns the gradient w.r.t. the initial state.
template <typename Scalar>
Vector<Scalar> gru_backward(GruWeights<Scalar> const &w,
                            Matrix<Scalar> const     &emb,
                            std::span<TokenId const>  inputs,
                            GruTrace<Scalar> const   &tr,
                            ColMatrix<Scalar> const  &dh_out,
                            GruWeights<Scalar>       &gw,
                            Matrix<Scalar>           &gemb)
{
  auto const        H = tr.h.rows();
  auto const        T = static_cast<Eigen::Index>(inputs.size());
  ColMatrix<Scalar> gates(3 * H, T); // pre-activation gradients
  ColMatrix<Scalar> rh(H, T);
  Vector<Scalar>    carry = Vector<Scalar>::Zero(H);
  auto const        u_zr = w.hidden.topRows(2 * H);
  auto const        u_n = w.hidden.bottomRows(H);

  for (Eigen::Index t = T - 1; t >= 0; --t) {
    Vector<Scalar> dh = dh_out.col(t) + carry;
    auto const     h = tr.h.col(t);
    auto const     z = tr.z.col(t).array();
    auto const     r = tr.r.col(t).array();
    auto const     n = tr.n.col(t).array();
    Vector<Scalar> dz_pre = (dh.array() * (h.array() - n) * z * (Scalar(1) - z)).matrix();
    Vector<Scalar> dn_pre = (dh.array() * (Scalar(1) - z) * (Scalar(1) - n * n)).matrix();
    Vector<Scalar> drh = u_n.transpose() * dn_pre;
    Vector<Scalar> dr_pre = (drh.array() * h.array() * r * (Scalar(1) - r)).matrix();
    gates.col(t) << dz_pre, dr_pre, dn_pre;
    rh.col(t) = (r * h.array()).matrix();
    carry = (dh.array() * z).matrix() + u_zr.transpose() * gates.col(t).head(2 * H) + (drh.array() * r).matrix();
  }

  ColMatrix<Scalar> x(emb.cols(), T);
  for (Eigen::Index t = 0; t < T; ++t) {
    x.col(t) = emb.row(inputs[static_cast<std::size_t>(t)]).transpose();
  }
  gw.input.noalias() += gates * x.transpose();
  gw.bias += gates.rowwise().sum();
  gw.hidden.topRows(2 * H).noalias() += gates.topRows(2 * H) * tr.h.leftCols(T).transpose();
  gw.hidden.bottomRows(H).noalias() += gates.bottomRows(H) * rh.transpose();
  ColMatrix<Scalar> dx = w.input.transpose() * gates;
  for (Eigen::Index t = 0; t < T; ++t) {
    gemb.row(inputs[static_cast<std::size_t>(t)]) += dx.col(t).transpose();
  }
  return carry;
}

inline TokenSeq decoder_inputs(std::span<TokenId const> target)
{
  TokenSeq in;
  in.reserve(target.size());
  in.push_back(kBos);
  in.insert(in.end(), target.begin(), target.end() - (target.empty() ? 0 : 1));
  return in;
}

} // namespace detail

// Final encoder state after a recurrent pass from zero over `source`.
template <typename Scalar>
Vector<Scalar> encode(Model<Scalar> const &model, std::span<TokenId const> source)
{
  if (source.empty()) {
    throw PreconditionError("encoder input must be non-empty");
  }
  detail::check_ids(source, model.config.vocab_size);
  auto const     H = static_cast<Eigen::Index>(model.config.hidden_dim);
  Vector<Scalar> h = Vector<Scalar>::Zero(H);
  for (auto x : source) {
    h = detail::gru_step(model.params.encoder, model.params.embedding, x, h);
  }
  return h;
}

// Decoder start state: zero for the response LM or an empty source.
template <typename Scalar>
Vector<Scalar> initial_state(Model<Scalar> const &model, std::span<TokenId const> source)
{
  if (model.config.role == ModelRole::ResponseLm || source.empty()) {
    return Vector<Scalar>::Zero(static_cast<Eigen::Index>(model.config.hidden_dim));
  }
  return encode(model, source);
}

// Teacher-forced log P(target_i | target_<i, source) for every target token.
template <typename Scalar>
std::vector<Scalar> decoder_log_probs(Model<Scalar> const &model, std::span<TokenId const> source, std::span<TokenId const> target)
{
  if (target.empty()) {
    throw PreconditionError("decoder target must be non-empty");
  }
  detail::check_ids(source, model.config.vocab_size);
  detail::check_ids(target, model.config.vocab_size);
  auto const         &p = model.params;
  Vector<Scalar>      h = initial_state(model, source);
  std::vector<Scalar> out;
  out.reserve(target.size());
  TokenId prev = kBos;
  for (auto y : target) {
    h = detail::gru_step(p.decoder, p.embedding, prev, h);
    out.push_back(detail::log_softmax(detail::output_logits(p, h))(y));
    prev = y;
  }
  return out;
}

template <typename Scalar>
double decoder_log_prob(Model<Scalar> const &model, std::span<TokenId const> source, std::span<TokenId const> target)
{
  double s = 0.0;
  for (auto v : decoder_log_probs(model, source, target)) {
    s += static_cast<double>(v);
  }
  return s;
}

// Per-token log-probabilities of `response` + EOS (or of the history, for a
// backward model), with the inputs laid out according to the model role.
template <typename Scalar>
std::vector<Scalar> sequence_log_probs(Model<Scalar> const &model, DialogueHistory const &history, Utterance const &response)
{
  if (response.empty()) {
    throw PreconditionError("response must be non-empty");
  }
  auto io = model_io(model.config.role, history, response);
  return decoder_log_probs(model, io.source, io.target);
}

// Adds the gradient of sum_i weights[i] * log P(target_i | target_<i, source)
// into `grads`; returns log P(target | source).
template <typename Scalar>
double accumulate_gradient(Model<Scalar> const      &model,
                         std::span<TokenId const>  source,
                         std::span<TokenId const>  target,
                         std::span<Scalar const>   weights,
                         Gradients<Scalar>        &grads)
{
  if (target.empty() || weights.size() != target.size()) {
    throw PreconditionError("one loss weight per target token is required");
  }
  detail::check_ids(source, model.config.vocab_size);
  detail::check_ids(target, model.config.vocab_size);
  if (std::ranges::all_of(weights, [](Scalar w) { return w == Scalar(0); })) {
    return decoder_log_prob(model, source, target);
  }
  for (auto w : weights) {
    if (!std::isfinite(static_cast<double>(w))) {
      throw PreconditionError("loss weights must be finite");
    }
  }

  using detail::ColMatrix;
  auto const &p = model.params;
  auto const  H = static_cast<Eigen::Index>(model.config.hidden_dim);
  auto const  V = static_cast<Eigen::Index>(model.config.vocab_size);
  bool const  use_encoder = model.config.role != ModelRole::ResponseLm && !source.empty();

  Vector<Scalar>           h0 = Vector<Scalar>::Zero(H);
  detail::GruTrace<Scalar> enc;
  if (use_encoder) {
    enc = detail::gru_forward(p.encoder, p.embedding, source, h0);
    h0 = enc.h.col(enc.h.cols() - 1);
  }
  auto const inputs = detail::decoder_inputs(target);
  auto const dec = detail::gru_forward(p.decoder, p.embedding, std::span<TokenId const>(inputs), h0);

  auto const        T = static_cast<Eigen::Index>(target.size());
  ColMatrix<Scalar> states = dec.h.rightCols(T);
  ColMatrix<Scalar> dlogits(V, T);
  double            total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector<Scalar> logp = detail::log_softmax(detail::output_logits(p, Vector<Scalar>(states.col(t))));
    total += static_cast<double>(logp(target[static_cast<std::size_t>(t)]));
    Scalar const   w = weights[static_cast<std::size_t>(t)];
    dlogits.col(t) = -w * logp.array().exp().matrix();
    dlogits(target[static_cast<std::size_t>(t)], t) += w;
  }
  grads.output_weight.noalias() += states * dlogits.transpose();
  grads.output_bias += dlogits.rowwise().sum();
  ColMatrix<Scalar> dh = p.output_weight * dlogits;

  Vector<Scalar> dh0 = detail::gru_backward(p.decoder, p.embedding, std::span<TokenId const>(inputs), dec, dh,
                                            grads.decoder, grads.embedding);
  if (use_encoder) {
    ColMatrix<Scalar> denc = ColMatrix<Scalar>::Zero(H, static_cast<Eigen::Index>(source.size()));
    denc.col(denc.cols() - 1) = dh0;
    detail::gru_backward(p.encoder, p.embedding, source, enc, denc, grads.encoder, grads.embedding);
  }
  return total;
}

template <typename Scalar>
struct WeightedSequence
{
  TokenSeq            source;
  TokenSeq            target;
  std::vector<Scalar> weights; // one per target token
};

// Exact gradient of sum over sequences of sum_i weight_i * log P(y_i | y_<i, x).
template <typename Scalar>
Gradients<Scalar> backward(Model<Scalar> const &model, std::span<WeightedSequence<Scalar> const> batch)
{
  auto grads = Gradients<Scalar>::zeros(model.config);
  for (auto const &s : batch) {
    accumulate_gradient(model, std::span<TokenId const>(s.source), std::span<TokenId const>(s.target),
                        std::span<Scalar const>(s.weights), grads);
  }
  require_finite(grads, "gradient");
  return grads;
}

// Argmax decoding; ties go to the lowest id.
template <typename Scalar>
Hypothesis greedy_decode(Model<Scalar> const &model, std::span<TokenId const> source)
{
  auto const    &p = model.params;
  Vector<Scalar> h = initial_state(model, source);
  Hypothesis     hyp;
  TokenId        prev = kBos;
  while (hyp.tokens.size() < model.config.max_decode_len) {
    h = detail::gru_step(p.decoder, p.embedding, prev, h);
    Vector<Scalar> logp = detail::log_softmax(detail::output_logits(p, h));
    Eigen::Index   best = 0;
    for (Eigen::Index i = 1; i < logp.size(); ++i) {
      if (logp(i) > logp(best)) {
        best = i;
      }
    }
    prev = static_cast<TokenId>(best);
    hyp.tokens.push_back(prev);
    hyp.score += static_cast<double>(logp(best));
    if (prev == kEos) {
      break;
    }
  }
  return hyp;
}

// Inverse-CDF draw from a normalized distribution.
template <typename Scalar>
Eigen::Index sample_categorical(Vector<Scalar> const &probs, Rng &rng)
{
  double const u = uniform01(rng);
  double       cum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cum += static_cast<double>(probs(i));
    if (u < cum) {
      return i;
    }
  }
  // u landed in the rounding slack above the last cumulative sum
  for (Eigen::Index i = probs.size() - 1; i > 0; --i) {
    if (probs(i) > Scalar(0)) {
      return i;
    }
  }
  return 0;
}

// Ancestral sampling from softmax(logits / temperature). The score is the
// log-probability of the emitted tokens at temperature 1.
template <typename Scalar>
Hypothesis sample_decode(Model<Scalar> const &model, std::span<TokenId const> source, double temperature, Rng &rng)
{
  if (!(temperature > 0.0)) {
    throw PreconditionError("sampling temperature must be positive");
  }
  auto const    &p = model.params;
  Vector<Scalar> h = initial_state(model, source);
  Hypothesis     hyp;
  TokenId        prev = kBos;
  while (hyp.tokens.size() < model.config.max_decode_len) {
    h = detail::gru_step(p.decoder, p.embedding, prev, h);
    Vector<Scalar> logits = detail::output_logits(p, h);
    Vector<Scalar> logp = detail::log_softmax(logits);
    Vector<double> scaled = detail::log_softmax(Vector<double>(logits.template cast<double>() / temperature));
    Vector<double> probs = scaled.array().exp().matrix();
    auto const     k = sample_categorical(probs, rng);
    prev = static_cast<TokenId>(k);
    hyp.tokens.push_back(prev);
    hyp.score += static_cast<double>(logp(k));
    if (prev == kEos) {
      break;
    }
  }
  return hyp;
}

// Length-unnormalized beam search. A hypothesis leaves the beam when it emits
// EOS or reaches max_decode_len. Results are sorted by score, then tokens.
template <typename Scalar>
std::vector<Hypothesis> beam_search(Model<Scalar> const &model, std::span<TokenId const> source, std::size_t beam_width, std::size_t n_best)
{
  if (n_best < 1 || n_best > beam_width) {
    throw PreconditionError("beam search requires 1 <= n_best <= beam_width");
  }
  struct Live
  {
    Hypothesis     hyp;
    Vector<Scalar> h;
  };
  struct Candidate
  {
    std::size_t parent;
    TokenId     token;
    double      score;
  };
  auto const &p = model.params;
  auto const  better = [](Hypothesis const &a, Hypothesis const &b) {
    return a.score != b.score ? a.score > b.score : a.tokens < b.tokens;
  };

  std::vector<Live>       beam{{Hypothesis{}, initial_state(model, source)}};
  std::vector<Hypothesis> done;
  for (std::size_t len = 0; len < model.config.max_decode_len && !beam.empty(); ++len) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      TokenId const prev = beam[b].hyp.tokens.empty() ? kBos : beam[b].hyp.tokens.back();
      beam[b].h = detail::gru_step(p.decoder, p.embedding, prev, beam[b].h);
      Vector<Scalar> logp = detail::log_softmax(detail::output_logits(p, beam[b].h));
      for (Eigen::Index k = 0; k < logp.size(); ++k) {
        cands.push_back({b, static_cast<TokenId>(k), beam[b].hyp.score + static_cast<double>(logp(k))});
      }
    }
    // Equal-length parents: comparing parent tokens, then the new token, is
    // lexicographic order on the extended sequences.
    auto const keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](Candidate const &a, Candidate const &b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return beam[a.parent].hyp.tokens < beam[b.parent].hyp.tokens;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      auto const &c = cands[i];
      Live        child{beam[c.parent].hyp, beam[c.parent].h};
      child.hyp.tokens.push_back(c.token);
      child.hyp.score = c.score;
      if (c.token == kEos || child.hyp.tokens.size() >= model.config.max_decode_len) {
        done.push_back(std::move(child.hyp));
      } else {
        next.push_back(std::move(child));
      }
    }
    std::stable_sort(next.begin(), next.end(), [&](Live const &a, Live const &b) { return better(a.hyp, b.hyp); });
    beam = std::move(next);
  }
  std::sort(done.begin(), done.end(), better);
  if (done.size() > n_best) {
    done.resize(n_best);
  }
  return done;
}

} // namespace iat
