#include "iat/train_config.hpp"
#include "iat/errors.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace iat {

std::string_view to_string(ModeSchedule s)
{
  switch (s) {
  case ModeSchedule::SupervisedOnly: return "supervised_only";
  case ModeSchedule::SelfSupervisedOnly: return "self_supervised_only";
  case ModeSchedule::Alternate: return "alternate";
  }
  return "?";
}

void TrainConfig::validate() const
{
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(iat_margin >= 0.0)) throw ConfigError("iat_margin must be non-negative");
  if (enabled_perturbations.empty()) throw ConfigError("enabled_perturbations must not be empty");
  if (!(sample_temperature > 0.0)) throw ConfigError("sample_temperature must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model dimensions must be at least 1");
  if (max_decode_len < 2) throw ConfigError("max_decode_len must be at least 2");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be non-negative");
  if (history_window < 1) throw ConfigError("history_window must be at least 1");
}

TrainConfig train_config_from_json(nlohmann::json const &j)
{
  if (!j.is_object()) {
    throw ConfigError("training config must be a JSON object");
  }
  TrainConfig c;
  using Setter = std::function<void(nlohmann::json const &)>;
  std::map<std::string, Setter> const setters = {
    {"batch_size", [&](auto const &v) { c.batch_size = v.template get<std::size_t>(); }},
    {"learning_rate", [&](auto const &v) { c.learning_rate = v.template get<double>(); }},
    {"adam_beta1", [&](auto const &v) { c.adam_beta1 = v.template get<double>(); }},
    {"adam_beta2", [&](auto const &v) { c.adam_beta2 = v.template get<double>(); }},
    {"adam_eps", [&](auto const &v) { c.adam_eps = v.template get<double>(); }},
    {"max_epochs", [&](auto const &v) { c.max_epochs = v.template get<std::size_t>(); }},
    {"patience", [&](auto const &v) { c.patience = v.template get<std::size_t>(); }},
    {"iat_margin", [&](auto const &v) { c.iat_margin = v.template get<double>(); }},
    {"enabled_perturbations",
     [&](auto const &v) {
       c.enabled_perturbations.clear();
       for (auto const &name : v) {
         auto kind = parse_perturbation(name.template get<std::string>());
         if (!kind) {
           throw ConfigError("unknown perturbation '" + name.template get<std::string>() + "'; valid: " + perturbation_names());
         }
         c.enabled_perturbations.push_back(*kind);
       }
     }},
    {"sample_temperature", [&](auto const &v) { c.sample_temperature = v.template get<double>(); }},
    {"mode_schedule",
     [&](auto const &v) {
       auto s = v.template get<std::string>();
       if (s == "supervised_only") c.mode_schedule = ModeSchedule::SupervisedOnly;
       else if (s == "self_supervised_only") c.mode_schedule = ModeSchedule::SelfSupervisedOnly;
       else if (s == "alternate") c.mode_schedule = ModeSchedule::Alternate;
       else throw ConfigError("unknown mode_schedule '" + s + "'");
     }},
    {"grad_clip", [&](auto const &v) { c.grad_clip = v.template get<double>(); }},
    {"seed", [&](auto const &v) { c.seed = v.template get<std::uint64_t>(); }},
    {"length_normalized_reward", [&](auto const &v) { c.length_normalized_reward = v.template get<bool>(); }},
    {"standardize_rewards", [&](auto const &v) { c.standardize_rewards = v.template get<bool>(); }},
    {"embed_dim", [&](auto const &v) { c.embed_dim = v.template get<std::size_t>(); }},
    {"hidden_dim", [&](auto const &v) { c.hidden_dim = v.template get<std::size_t>(); }},
    {"max_decode_len", [&](auto const &v) { c.max_decode_len = v.template get<std::size_t>(); }},
    {"init_scale", [&](auto const &v) { c.init_scale = v.template get<double>(); }},
    {"history_window", [&](auto const &v) { c.history_window = v.template get<std::size_t>(); }},
    {"epoch_examples", [&](auto const &v) { c.epoch_examples = v.template get<std::size_t>(); }},
  };
  for (auto const &[key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    try {
      it->second(value);
    } catch (nlohmann::json::exception const &) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

nlohmann::json to_json(TrainConfig const &c)
{
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.enabled_perturbations) {
    kinds.push_back(std::string(to_string(k)));
  }
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"iat_margin", c.iat_margin},
          {"enabled_perturbations", kinds},
          {"sample_temperature", c.sample_temperature},
          {"mode_schedule", std::string(to_string(c.mode_schedule))},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"length_normalized_reward", c.length_normalized_reward},
          {"standardize_rewards", c.standardize_rewards},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"max_decode_len", c.max_decode_len},
          {"init_scale", c.init_scale},
          {"history_window", c.history_window},
          {"epoch_examples", c.epoch_examples}};
}

TrainConfig load_train_config(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("config " + path.string() + " is not valid JSON");
  }
  return train_config_from_json(j);
}

} // namespace iat
