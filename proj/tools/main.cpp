// lossland CLI: train small networks, find lottery tickets with iterative
// magnitude pruning, and compute/render 2D loss surfaces around trained
// minimizers.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "lossland/config.hpp"
#include "lossland/harness.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::size_t workers = 0;
  long long seed = -1;
  std::size_t resolution = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--data-dir", opts.data_dir, "dataset directory");
  cmd->add_option("--workers", opts.workers,
                  "surface evaluator threads (0 = all cores)");
  cmd->add_option("--seed", opts.seed, "training seed override");
  cmd->add_option("--resolution", opts.resolution,
                  "square grid resolution override");
}

lossland::ExperimentConfig make_config(const CommonOpts& opts) {
  lossland::ExperimentConfig cfg = lossland::load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.data_dir.empty()) cfg.data_dir = opts.data_dir;
  if (opts.workers > 0) cfg.workers = opts.workers;
  if (opts.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.resolution > 0) {
    cfg.grid.res_a = opts.resolution;
    cfg.grid.res_b = opts.resolution;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loss landscape and lottery ticket toolkit"};
  app.require_subcommand(1);

  CommonOpts train_opts, surface_opts, evalcount_opts, batchsize_opts,
      imp_opts;
  std::string checkpoint_path, ticket_path, sweep_checkpoint;

  CLI::App* train_cmd =
      app.add_subcommand("train", "train a network and write a checkpoint");
  add_common(train_cmd, train_opts);

  CLI::App* surface_cmd = app.add_subcommand(
      "surface", "compute a loss surface around a checkpoint");
  add_common(surface_cmd, surface_opts);
  surface_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  surface_cmd->add_option("--ticket", ticket_path,
                          "ticket file restricting the surface to a mask");

  CLI::App* evalcount_cmd = app.add_subcommand(
      "sweep-evalcount",
      "surfaces across evaluation-set sizes with shared directions");
  add_common(evalcount_cmd, evalcount_opts);
  evalcount_cmd->add_option("--checkpoint", sweep_checkpoint,
                            "reuse an existing checkpoint");

  CLI::App* batchsize_cmd = app.add_subcommand(
      "sweep-batchsize", "train and plot across mini-batch sizes");
  add_common(batchsize_cmd, batchsize_opts);

  CLI::App* imp_cmd = app.add_subcommand(
      "imp-compare",
      "iterative magnitude pruning vs random masks, with surfaces");
  add_common(imp_cmd, imp_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      lossland::cmd_train(make_config(train_opts), std::cout);
    } else if (surface_cmd->parsed()) {
      lossland::cmd_surface(make_config(surface_opts), checkpoint_path,
                            ticket_path, std::cout);
    } else if (evalcount_cmd->parsed()) {
      lossland::cmd_sweep_evalcount(make_config(evalcount_opts),
                                    sweep_checkpoint, std::cout);
    } else if (batchsize_cmd->parsed()) {
      lossland::cmd_sweep_batchsize(make_config(batchsize_opts), std::cout);
    } else if (imp_cmd->parsed()) {
      lossland::cmd_imp_compare(make_config(imp_opts), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
