#pragma once

#include "iat/perturb.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace iat {

enum class ModeSchedule : std::uint8_t
{
  SupervisedOnly,
  SelfSupervisedOnly,
  Alternate, // starts supervised, toggles every iteration
};

struct TrainConfig
{
  std::size_t                   batch_size = 32;
  double                        learning_rate = 1e-3;
  double                        adam_beta1 = 0.9;
  double                        adam_beta2 = 0.999;
  double                        adam_eps = 1e-8;
  std::size_t                   max_epochs = 20;
  std::size_t                   patience = 3;
  double                        iat_margin = 1.0;
  std::vector<PerturbationKind> enabled_perturbations = {kAllPerturbations.begin(), kAllPerturbations.end()};
  double                        sample_temperature = 1.0;
  ModeSchedule                  mode_schedule = ModeSchedule::Alternate;
  double                        grad_clip = 5.0;
  std::uint64_t                 seed = 1;

  // Reward shaping switches; both off reproduces the raw summed-NLL reward.
  bool length_normalized_reward = false;
  bool standardize_rewards = false;

  // Model shape used when a run starts from scratch.
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t max_decode_len = 20;
  double      init_scale = 0.1;

  std::size_t history_window = 2;
  // Examples drawn per epoch (0 = one full pass over the training split).
  std::size_t epoch_examples = 0;

  void validate() const;
};

std::string_view to_string(ModeSchedule s);

// Unknown keys raise ConfigError naming the key.
TrainConfig    train_config_from_json(nlohmann::json const &j);
nlohmann::json to_json(TrainConfig const &c);
TrainConfig    load_train_config(std::filesystem::path const &path);

} // namespace iat
