#pragma once

#include "iat/errors.hpp"
#include "iat/rng.hpp"
#include "iat/types.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace iat {

enum class ModelRole : std::uint8_t
{
  Forward,    // p(response | history)
  Backward,   // p(history | response)
  ResponseLm, // p(response), encoder unused
};

std::string_view         to_string(ModelRole role);
std::optional<ModelRole> parse_role(std::string_view s);

struct ModelConfig
{
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t max_decode_len = 20;
  ModelRole   role = ModelRole::Forward;

  void validate() const;
  bool operator==(ModelConfig const &) const = default;
};

template <typename Fn, typename P0, typename... Ps>
void visit_tensors(Fn &&fn, P0 &&p0, Ps &&...ps);

// Gated recurrent cell. Gate blocks are stacked [update; reset; candidate].
template <typename Scalar>
struct GruWeights
{
  Matrix<Scalar> input;  // [3H x in]
  Matrix<Scalar> hidden; // [3H x H]
  Vector<Scalar> bias;   // [3H]
};

template <typename Scalar>
struct Parameters
{
  Matrix<Scalar>     embedding; // [V x E]
  GruWeights<Scalar> encoder;
  GruWeights<Scalar> decoder;
  Matrix<Scalar>     output_weight; // [H x V]
  Vector<Scalar>     output_bias;   // [V]

  static Parameters zeros(ModelConfig const &config)
  {
    auto const V = static_cast<Eigen::Index>(config.vocab_size);
    auto const E = static_cast<Eigen::Index>(config.embed_dim);
    auto const H = static_cast<Eigen::Index>(config.hidden_dim);
    auto       gru = [&](Eigen::Index in) {
      return GruWeights<Scalar>{Matrix<Scalar>::Zero(3 * H, in), Matrix<Scalar>::Zero(3 * H, H), Vector<Scalar>::Zero(3 * H)};
    };
    return Parameters{Matrix<Scalar>::Zero(V, E), gru(E), gru(E), Matrix<Scalar>::Zero(H, V), Vector<Scalar>::Zero(V)};
  }

  // Uniform in [-scale, scale], deterministic in `seed`.
  static Parameters random(ModelConfig const &config, std::uint64_t seed, double scale = 0.1)
  {
    auto p = zeros(config);
    Rng  rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    visit_tensors([&](std::string_view, auto &t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = static_cast<Scalar>(dist(rng));
      }
    }, p);
    return p;
  }

  template <typename NewScalar>
  Parameters<NewScalar> cast() const
  {
    auto g = [](GruWeights<Scalar> const &w) {
      return GruWeights<NewScalar>{w.input.template cast<NewScalar>(), w.hidden.template cast<NewScalar>(),
                                   w.bias.template cast<NewScalar>()};
    };
    return Parameters<NewScalar>{embedding.template cast<NewScalar>(), g(encoder), g(decoder),
                                 output_weight.template cast<NewScalar>(), output_bias.template cast<NewScalar>()};
  }

  void set_zero()
  {
    visit_tensors([](std::string_view, auto &t) { t.setZero(); }, *this);
  }

  Parameters &operator+=(Parameters const &o)
  {
    visit_tensors([](std::string_view, auto &a, auto const &b) { a += b; }, *this, o);
    return *this;
  }

  Parameters &operator*=(Scalar s)
  {
    visit_tensors([s](std::string_view, auto &a) { a *= s; }, *this);
    return *this;
  }

  std::size_t num_scalars() const
  {
    std::size_t n = 0;
    visit_tensors([&](std::string_view, auto const &t) { n += static_cast<std::size_t>(t.size()); }, *this);
    return n;
  }
};

template <typename Scalar>
using Gradients = Parameters<Scalar>;

// Calls fn(name, tensor_of_p0, tensor_of_p1, ...) for every named tensor, in a
// fixed order shared by checkpoints and optimizer state.
template <typename Fn, typename P0, typename... Ps>
void visit_tensors(Fn &&fn, P0 &&p0, Ps &&...ps)
{
  fn("embedding", p0.embedding, ps.embedding...);
  fn("encoder.input", p0.encoder.input, ps.encoder.input...);
  fn("encoder.hidden", p0.encoder.hidden, ps.encoder.hidden...);
  fn("encoder.bias", p0.encoder.bias, ps.encoder.bias...);
  fn("decoder.input", p0.decoder.input, ps.decoder.input...);
  fn("decoder.hidden", p0.decoder.hidden, ps.decoder.hidden...);
  fn("decoder.bias", p0.decoder.bias, ps.decoder.bias...);
  fn("output.weight", p0.output_weight, ps.output_weight...);
  fn("output.bias", p0.output_bias, ps.output_bias...);
}

template <typename Scalar>
bool all_finite(Parameters<Scalar> const &p)
{
  bool ok = true;
  visit_tensors([&](std::string_view, auto const &t) { ok = ok && t.allFinite(); }, p);
  return ok;
}

// Throws NumericError naming the first tensor with a NaN or infinity.
template <typename Scalar>
void require_finite(Parameters<Scalar> const &p, std::string_view what)
{
  visit_tensors([&](std::string_view name, auto const &t) {
    if (!t.allFinite()) {
      throw NumericError("non-finite " + std::string(what) + " in " + std::string(name));
    }
  }, p);
}

template <typename Scalar>
Scalar squared_norm(Parameters<Scalar> const &p)
{
  Scalar s = 0;
  visit_tensors([&](std::string_view, auto const &t) { s += t.squaredNorm(); }, p);
  return s;
}

template <typename Scalar>
struct Model
{
  ModelConfig        config;
  Parameters<Scalar> params;

  static Model random(ModelConfig const &config, std::uint64_t seed, double scale = 0.1)
  {
    config.validate();
    return Model{config, Parameters<Scalar>::random(config, seed, scale)};
  }
  static Model zeros(ModelConfig const &config)
  {
    config.validate();
    return Model{config, Parameters<Scalar>::zeros(config)};
  }
};

inline std::string_view to_string(ModelRole role)
{
  switch (role) {
  case ModelRole::Forward: return "forward";
  case ModelRole::Backward: return "backward";
  case ModelRole::ResponseLm: return "response_lm";
  }
  return "?";
}

inline std::optional<ModelRole> parse_role(std::string_view s)
{
  if (s == "forward") return ModelRole::Forward;
  if (s == "backward") return ModelRole::Backward;
  if (s == "response_lm" || s == "response-lm") return ModelRole::ResponseLm;
  return std::nullopt;
}

inline void ModelConfig::validate() const
{
  if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("model dimensions must be at least 1");
  }
  if (max_decode_len < 2) {
    throw ConfigError("max_decode_len must be at least 2");
  }
}

} // namespace iat
