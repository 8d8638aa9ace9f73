#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lossland/network.hpp"
#include "lossland/optim.hpp"
#include "lossland/render.hpp"
#include "lossland/surface.hpp"

namespace lossland {

// Experiment description parsed from a key = value config file.
struct ExperimentConfig {
  std::string architecture = "mlp-small";  // mlp-small | lenet-style |
                                           // lenet-style-residual
  std::string dataset = "synth";           // synth | idx | cifar

  std::size_t synth_classes = 3;
  std::size_t synth_per_class = 200;
  std::size_t synth_dims = 4;
  double synth_separation = 6.0;
  std::uint64_t synth_seed = 1;

  std::string idx_train_images, idx_train_labels;
  std::string idx_test_images, idx_test_labels;
  std::vector<std::string> cifar_train_batches;
  std::string cifar_test_batch;
  std::size_t dataset_limit = 0;  // 0 = no truncation
  std::string data_dir = ".";

  std::uint64_t init_seed = 3;
  TrainConfig train;

  GridSpec grid;
  std::size_t eval_n = 250;
  std::uint64_t eval_seed = 7;
  std::uint64_t dir_seed1 = 11;
  std::uint64_t dir_seed2 = 12;

  std::vector<std::size_t> sweep_batch_sizes{2, 16, 160, 1600, 16000};
  std::vector<std::size_t> sweep_eval_counts{1, 10, 100, 1000, 3000};

  std::size_t imp_rounds = 10;
  double imp_prune_fraction = 0.1;
  std::size_t imp_epochs_per_round = 35;
  std::vector<std::size_t> imp_surface_rounds;  // empty = all rounds

  double stats_epsilon = 0.05;
  RenderOptions render;

  std::size_t workers = 0;  // 0 = hardware concurrency
  std::string out_dir = "out";

  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin = "<memory>");

// Canonical text form of the config; its crc32 hex is embedded in every
// emitted artifact as the "config" annotation.
std::string config_text(const ExperimentConfig& cfg);
std::string config_digest_hex(const ExperimentConfig& cfg);

// Architecture presets resolved against a concrete input shape and class
// count.
std::vector<LayerSpec> architecture_preset(
    const std::string& name, const std::vector<std::size_t>& input_shape,
    std::size_t classes);

}  // namespace lossland
