#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "lossland/config.hpp"
#include "lossland/data_io.hpp"
#include "lossland/network.hpp"
#include "lossland/reports.hpp"

namespace lossland {

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData load_experiment_data(const ExperimentConfig& cfg);

// Network from the config's architecture preset, shaped to the dataset.
Network build_from_config(const ExperimentConfig& cfg, const Dataset& train);

// Experiment pipelines behind the CLI subcommands. All artifacts land in
// cfg.out_dir annotated with the config digest; human-readable progress
// goes to log.
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);

void cmd_surface(const ExperimentConfig& cfg,
                 const std::filesystem::path& checkpoint_path,
                 const std::filesystem::path& ticket_path,  // may be empty
                 std::ostream& log);

// One surface per eval count with a shared direction pair and nested
// subsets; reports each surface's Pearson correlation against the
// largest-count surface. Trains a fresh model when checkpoint_path is
// empty.
void cmd_sweep_evalcount(const ExperimentConfig& cfg,
                         const std::filesystem::path& checkpoint_path,
                         std::ostream& log);

void cmd_sweep_batchsize(const ExperimentConfig& cfg, std::ostream& log);

ComparisonReport cmd_imp_compare(const ExperimentConfig& cfg,
                                 std::ostream& log);

}  // namespace lossland
