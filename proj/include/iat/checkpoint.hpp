#pragma once

#include "iat/errors.hpp"
#include "iat/params.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>

// Layout: the 8-byte magic "IATCKPT1", one line of JSON header terminated by
// '\n', then the raw little-endian tensor payloads in header order. Offsets in
// the header are relative to the first payload byte.

namespace iat {

inline constexpr char     kCheckpointMagic[] = "IATCKPT1";
inline constexpr unsigned kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host byte order");

inline nlohmann::json to_json(ModelConfig const &c)
{
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"max_decode_len", c.max_decode_len},
          {"role", std::string(to_string(c.role))}};
}

inline ModelConfig model_config_from_json(nlohmann::json const &j)
{
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.max_decode_len = j.at("max_decode_len").get<std::size_t>();
  auto role = parse_role(j.at("role").get<std::string>());
  if (!role) {
    throw CheckpointCorruptError("corrupt checkpoint: unknown role");
  }
  c.role = *role;
  c.validate();
  return c;
}

template <typename Scalar>
constexpr char const *dtype_name()
{
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? "f32" : "f64";
}

template <typename Scalar>
void save_checkpoint(Model<Scalar> const &model, std::filesystem::path const &path)
{
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t    offset = 0;
  visit_tensors([&](std::string_view name, auto const &t) {
    nlohmann::json shape = t.ColsAtCompileTime == 1 ? nlohmann::json{t.rows()} : nlohmann::json{t.rows(), t.cols()};
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += static_cast<std::size_t>(t.size()) * sizeof(Scalar);
  }, model.params);
  nlohmann::json header = {{"version", kCheckpointVersion},
                           {"config", to_json(model.config)},
                           {"dtype", dtype_name<Scalar>()},
                           {"tensors", tensors},
                           {"payload_bytes", offset}};

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write checkpoint " + path.string());
  }
  out.write(kCheckpointMagic, 8);
  out << header.dump() << '\n';
  visit_tensors([&](std::string_view, auto const &t) {
    out.write(reinterpret_cast<char const *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  }, model.params);
  if (!out) {
    throw Error("failed writing checkpoint " + path.string());
  }
}

namespace detail {

struct RawCheckpoint
{
  nlohmann::json header;
  std::string    payload;
};

inline RawCheckpoint read_checkpoint(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open checkpoint " + path.string());
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || bytes.compare(0, 7, kCheckpointMagic, 7) != 0) {
    throw CheckpointCorruptError("corrupt checkpoint: bad magic in " + path.string());
  }
  if (bytes[7] != kCheckpointMagic[7]) {
    throw CheckpointVersionError("unsupported checkpoint version '" + std::string(1, bytes[7]) + "' in " + path.string());
  }
  auto const eol = bytes.find('\n', 8);
  if (eol == std::string::npos) {
    throw CheckpointCorruptError("corrupt checkpoint: truncated header in " + path.string());
  }
  auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(eol), nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw CheckpointCorruptError("corrupt checkpoint: unreadable header in " + path.string());
  }
  if (header.value("version", 0u) != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version in " + path.string());
  }
  return {std::move(header), bytes.substr(eol + 1)};
}

template <typename Scalar, typename Stored>
void fill_params(RawCheckpoint const &raw, Parameters<Scalar> &params)
{
  auto const &tensors = raw.header.at("tensors");
  std::size_t index = 0;
  visit_tensors([&](std::string_view name, auto &t) {
    if (index >= tensors.size()) {
      throw CheckpointShapeError("checkpoint is missing tensor " + std::string(name));
    }
    auto const &entry = tensors[index++];
    auto const  shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    bool const  vec = t.ColsAtCompileTime == 1;
    if (entry.at("name").get<std::string>() != name || shape.size() != (vec ? 1u : 2u) || shape[0] != t.rows() ||
        (!vec && shape[1] != t.cols())) {
      throw CheckpointShapeError("checkpoint tensor " + std::string(name) + " has an unexpected shape");
    }
    auto const offset = entry.at("offset").get<std::size_t>();
    auto const bytes = static_cast<std::size_t>(t.size()) * sizeof(Stored);
    if (offset + bytes > raw.payload.size()) {
      throw CheckpointCorruptError("corrupt checkpoint: payload truncated at " + std::string(name));
    }
    if constexpr (std::is_same_v<Scalar, Stored>) {
      std::memcpy(t.data(), raw.payload.data() + offset, bytes);
    } else {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        Stored v;
        std::memcpy(&v, raw.payload.data() + offset + static_cast<std::size_t>(i) * sizeof(Stored), sizeof(Stored));
        t.data()[i] = static_cast<Scalar>(v);
      }
    }
  }, params);
  if (index != tensors.size()) {
    throw CheckpointShapeError("checkpoint has unexpected extra tensors");
  }
}

template <typename Scalar>
void load_payload(RawCheckpoint const &raw, Parameters<Scalar> &params)
{
  try {
    if (raw.header.at("payload_bytes").get<std::size_t>() != raw.payload.size()) {
      throw CheckpointCorruptError("corrupt checkpoint: payload size mismatch");
    }
    auto const dtype = raw.header.at("dtype").get<std::string>();
    if (dtype == "f32") {
      fill_params<Scalar, float>(raw, params);
    } else if (dtype == "f64") {
      fill_params<Scalar, double>(raw, params);
    } else {
      throw CheckpointCorruptError("corrupt checkpoint: unknown dtype " + dtype);
    }
  } catch (nlohmann::json::exception const &e) {
    throw CheckpointCorruptError(std::string("corrupt checkpoint: ") + e.what());
  }
}

} // namespace detail

// Values are converted when the stored dtype differs from Scalar; same-dtype
// loads are bit-exact.
template <typename Scalar>
Model<Scalar> load_checkpoint(std::filesystem::path const &path)
{
  auto        raw = detail::read_checkpoint(path);
  ModelConfig config;
  try {
    config = model_config_from_json(raw.header.at("config"));
  } catch (nlohmann::json::exception const &e) {
    throw CheckpointCorruptError(std::string("corrupt checkpoint: ") + e.what());
  } catch (ConfigError const &e) {
    throw CheckpointCorruptError(std::string("corrupt checkpoint: ") + e.what());
  }
  auto model = Model<Scalar>::zeros(config);
  detail::load_payload(raw, model.params);
  return model;
}

// Loads into an existing model; the stored config must match its shapes.
template <typename Scalar>
void load_checkpoint_into(std::filesystem::path const &path, Model<Scalar> &model)
{
  auto loaded = load_checkpoint<Scalar>(path);
  auto const &a = loaded.config;
  auto const &b = model.config;
  if (a.vocab_size != b.vocab_size || a.embed_dim != b.embed_dim || a.hidden_dim != b.hidden_dim) {
    throw CheckpointShapeError("checkpoint shapes do not match the model configuration");
  }
  model = std::move(loaded);
}

} // namespace iat
