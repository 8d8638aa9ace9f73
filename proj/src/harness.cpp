#include "lossland/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "lossland/artifact.hpp"
#include "lossland/directions.hpp"
#include "lossland/optim.hpp"
#include "lossland/pruning.hpp"
#include "lossland/render.hpp"
#include "lossland/rng.hpp"
#include "lossland/surface.hpp"

namespace lossland {

namespace {

namespace fs = std::filesystem;

std::string resolve(const ExperimentConfig& cfg, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(cfg.data_dir) / p).string();
}

std::size_t worker_count(const ExperimentConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

fs::path out_path(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / name;
}

// Config digest annotation; "x.*" headers are ignored by the unpackers.
void save_annotated(ArtifactFile art, const ExperimentConfig& cfg,
                    const fs::path& path) {
  art.header.emplace_back("x.config", config_digest_hex(cfg));
  save_artifact(art, path);
}

std::string pct(double frac) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", frac * 100.0);
  return buf;
}

SurfaceGrid compute_surface(const ExperimentConfig& cfg, const Network& net,
                            const Mask* mask, const EvalSubset& subset,
                            std::ostream* progress) {
  DirectionPair pair =
      make_direction_pair(net, cfg.dir_seed1, cfg.dir_seed2, mask);
  SurfaceGrid grid = evaluate_surface(net, mask, pair, cfg.grid, subset,
                                      worker_count(cfg), progress);
  grid.meta.checkpoint_digest = checkpoint_digest(net);
  grid.meta.extra["config"] = config_digest_hex(cfg);
  return grid;
}

void emit_surface_files(const ExperimentConfig& cfg, const SurfaceGrid& grid,
                        const std::string& stem, std::ostream& log) {
  fs::path surf = out_path(cfg, stem + ".surf");
  save_annotated(pack_surface(grid), cfg, surf);
  write_surface_text(grid, out_path(cfg, stem + ".txt"));
  render_heatmap(grid, cfg.render, out_path(cfg, stem + ".ppm"));
  std::vector<double> levels = choose_contour_levels(grid, cfg.render);
  if (!levels.empty())
    write_contours_text(extract_contours(grid, levels),
                        out_path(cfg, stem + "_contours.txt"));
  log << "wrote " << surf.string() << " (center_loss " << grid.center_loss
      << ", " << grid.meta.wall_seconds << "s)\n";
}

TrainResult train_fresh(const ExperimentConfig& cfg, const LoadedData& data,
                        const Network& net, std::ostream* progress) {
  auto [train_ds, val_ds] = holdout_split(data.train, 0.1, cfg.train.seed);
  return train(net, nullptr, train_ds, val_ds, cfg.train, progress);
}

}  // namespace

LoadedData load_experiment_data(const ExperimentConfig& cfg) {
  LoadedData data;
  if (cfg.dataset == "synth") {
    auto [train, test] =
        synth_blobs(cfg.synth_classes, cfg.synth_per_class, cfg.synth_dims,
                    cfg.synth_separation, cfg.synth_seed);
    data.train = std::move(train);
    data.test = std::move(test);
  } else if (cfg.dataset == "idx") {
    data.train = load_idx(resolve(cfg, cfg.idx_train_images),
                          resolve(cfg, cfg.idx_train_labels));
    data.train.split = "train";
    data.test = load_idx(resolve(cfg, cfg.idx_test_images),
                         resolve(cfg, cfg.idx_test_labels));
    data.test.split = "test";
  } else if (cfg.dataset == "cifar") {
    std::vector<std::string> batches;
    for (const std::string& b : cfg.cifar_train_batches)
      batches.push_back(resolve(cfg, b));
    data.train = load_cifar10(batches);
    data.train.split = "train";
    data.test = load_cifar10({resolve(cfg, cfg.cifar_test_batch)});
    data.test.split = "test";
  } else {
    throw std::invalid_argument("unknown dataset kind '" + cfg.dataset + "'");
  }
  if (cfg.dataset_limit > 0) {
    if (cfg.dataset_limit < data.train.size())
      data.train = data.train.head(cfg.dataset_limit);
    if (cfg.dataset_limit < data.test.size())
      data.test = data.test.head(cfg.dataset_limit);
  }
  return data;
}

Network build_from_config(const ExperimentConfig& cfg, const Dataset& train) {
  std::vector<LayerSpec> spec = architecture_preset(
      cfg.architecture, train.example_shape(), train.num_classes);
  return build_network(spec, train.example_shape(), cfg.init_seed);
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  LoadedData data = load_experiment_data(cfg);
  Network net = build_from_config(cfg, data.train);
  log << "training " << cfg.architecture << " on " << data.train.source
      << " (" << data.train.size() << " examples, "
      << net.param_count() << " params)\n";
  TrainResult result = train_fresh(cfg, data, net, &log);
  EvalResult test = evaluate(result.net, nullptr, data.test);
  log << "best_epoch " << result.report.best_epoch << " test_loss "
      << test.loss << " test_acc " << test.accuracy << "\n";

  fs::path ckpt = out_path(cfg, "checkpoint.ckpt");
  save_annotated(pack_checkpoint(result.net), cfg, ckpt);
  save_annotated(pack_train_report(result.report), cfg,
                 out_path(cfg, "train_report.rep"));
  log << "wrote " << ckpt.string() << " (digest "
      << checkpoint_digest(result.net) << ")\n";
}

void cmd_surface(const ExperimentConfig& cfg,
                 const std::filesystem::path& checkpoint_path,
                 const std::filesystem::path& ticket_path, std::ostream& log) {
  Network net = read_checkpoint(checkpoint_path);
  LoadedData data = load_experiment_data(cfg);

  Ticket ticket;
  const Mask* mask = nullptr;
  std::string mask_dig;
  if (!ticket_path.empty()) {
    ticket = read_ticket(ticket_path, net);
    mask = &ticket.mask;
    mask_dig = artifact_digest_hex(load_artifact(ticket_path));
    log << "ticket round " << ticket.round << " P_m " << pct(ticket.p_m)
        << "%\n";
  }

  EvalSubset subset = make_eval_subset(data.test, cfg.eval_n, cfg.eval_seed);
  SurfaceGrid grid = compute_surface(cfg, net, mask, subset, &log);
  grid.meta.mask_digest = mask_dig;
  emit_surface_files(cfg, grid, "surface", log);
}

void cmd_sweep_evalcount(const ExperimentConfig& cfg,
                         const std::filesystem::path& checkpoint_path,
                         std::ostream& log) {
  if (cfg.sweep_eval_counts.empty())
    throw std::invalid_argument("sweep-evalcount: empty sweep.eval_counts");
  if (!std::is_sorted(cfg.sweep_eval_counts.begin(),
                      cfg.sweep_eval_counts.end()))
    throw std::invalid_argument(
        "sweep-evalcount: counts must be ascending");

  LoadedData data = load_experiment_data(cfg);
  for (std::size_t n : cfg.sweep_eval_counts)
    if (n > data.test.size())
      throw std::invalid_argument("sweep-evalcount: count " +
                                  std::to_string(n) +
                                  " exceeds test set size " +
                                  std::to_string(data.test.size()));

  Network net;
  if (checkpoint_path.empty()) {
    net = build_from_config(cfg, data.train);
    TrainResult result = train_fresh(cfg, data, net, nullptr);
    net = std::move(result.net);
    save_annotated(pack_checkpoint(net), cfg, out_path(cfg, "checkpoint.ckpt"));
    log << "trained fresh model for sweep\n";
  } else {
    net = read_checkpoint(checkpoint_path);
  }

  // One direction pair shared by every surface in the sweep; nested subsets
  // come from the shared eval seed.
  DirectionPair pair = make_direction_pair(net, cfg.dir_seed1, cfg.dir_seed2);
  std::string ckpt_dig = checkpoint_digest(net);

  std::vector<SurfaceGrid> grids;
  for (std::size_t n : cfg.sweep_eval_counts) {
    EvalSubset subset = make_eval_subset(data.test, n, cfg.eval_seed);
    SurfaceGrid grid = evaluate_surface(net, nullptr, pair, cfg.grid, subset,
                                        worker_count(cfg), nullptr);
    grid.meta.checkpoint_digest = ckpt_dig;
    grid.meta.extra["config"] = config_digest_hex(cfg);
    emit_surface_files(cfg, grid, "surface_n" + std::to_string(n), log);
    grids.push_back(std::move(grid));
  }

  const SurfaceGrid& reference = grids.back();
  std::ofstream tsv(out_path(cfg, "evalcount_fidelity.tsv"));
  tsv << "n\tpearson_vs_n" << cfg.sweep_eval_counts.back() << "\twall_seconds\n";
  for (std::size_t k = 0; k < grids.size(); ++k) {
    double corr = pearson(grids[k].losses, reference.losses);
    log << "n=" << cfg.sweep_eval_counts[k] << " pearson=" << corr << "\n";
    tsv << cfg.sweep_eval_counts[k] << "\t" << corr << "\t"
        << grids[k].meta.wall_seconds << "\n";
  }
}

void cmd_sweep_batchsize(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sweep_batch_sizes.empty())
    throw std::invalid_argument("sweep-batchsize: empty sweep.batch_sizes");

  LoadedData data = load_experiment_data(cfg);
  auto [train_ds, val_ds] = holdout_split(data.train, 0.1, cfg.train.seed);
  for (std::size_t bs : cfg.sweep_batch_sizes)
    if (bs > train_ds.size())
      throw std::invalid_argument("sweep-batchsize: batch size " +
                                  std::to_string(bs) +
                                  " exceeds training set size " +
                                  std::to_string(train_ds.size()));

  Network init_net = build_from_config(cfg, data.train);
  EvalSubset subset = make_eval_subset(data.test, cfg.eval_n, cfg.eval_seed);

  std::ofstream tsv(out_path(cfg, "batchsize_sweep.tsv"));
  tsv << "batch_size\ttest_acc\tcenter_loss\tdepth\tflat_area_fraction\n";
  log << "batch_size test_acc depth flat\n";

  for (std::size_t bs : cfg.sweep_batch_sizes) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.train.batch_size = bs;
    TrainResult result =
        train(init_net, nullptr, train_ds, val_ds, run_cfg.train, nullptr);
    EvalResult test = evaluate(result.net, nullptr, data.test);

    SurfaceGrid grid =
        compute_surface(run_cfg, result.net, nullptr, subset, nullptr);
    grid.meta.extra["batch_size"] = std::to_string(bs);
    SurfaceStats stats = surface_stats(grid, cfg.stats_epsilon);

    std::string stem = "bs" + std::to_string(bs);
    save_annotated(pack_checkpoint(result.net), run_cfg,
                   out_path(cfg, "checkpoint_" + stem + ".ckpt"));
    emit_surface_files(run_cfg, grid, "surface_" + stem, log);

    log << bs << " " << test.accuracy << " " << stats.depth << " "
        << stats.flat_area_fraction << "\n";
    tsv << bs << "\t" << test.accuracy << "\t" << stats.center_loss << "\t"
        << stats.depth << "\t" << stats.flat_area_fraction << "\n";
  }
}

ComparisonReport cmd_imp_compare(const ExperimentConfig& cfg,
                                 std::ostream& log) {
  LoadedData data = load_experiment_data(cfg);
  auto [train_ds, val_ds] = holdout_split(data.train, 0.1, cfg.train.seed);
  Network base = build_from_config(cfg, data.train);
  std::string base_dig = checkpoint_digest(base);
  save_annotated(pack_checkpoint(base), cfg, out_path(cfg, "base.ckpt"));

  log << "imp: " << cfg.imp_rounds << " rounds, prune fraction "
      << cfg.imp_prune_fraction << ", " << base.param_count() << " params\n";
  std::vector<Ticket> tickets =
      run_imp(base, train_ds, val_ds, data.test, cfg.train,
              cfg.imp_prune_fraction, cfg.imp_rounds, cfg.imp_epochs_per_round,
              &log);

  std::vector<std::size_t> retained = cfg.imp_surface_rounds;
  if (retained.empty())
    for (std::size_t r = 0; r < tickets.size(); ++r) retained.push_back(r);

  EvalSubset subset = make_eval_subset(data.test, cfg.eval_n, cfg.eval_seed);
  TrainConfig round_cfg = cfg.train;
  round_cfg.max_epochs = cfg.imp_epochs_per_round;

  ComparisonReport report;
  log << "round P_m imp_acc rnd_acc imp_depth rnd_depth\n";

  for (std::size_t r : retained) {
    if (r >= tickets.size())
      throw std::invalid_argument("imp-compare: surface round " +
                                  std::to_string(r) + " out of range");
    const Ticket& imp = tickets[r];

    // Random baseline: same per-layer sparsity, same initialization, same
    // training seed as the IMP round.
    Mask rnd_mask = random_mask(imp.mask, mix_seed(cfg.train.seed, 0xba5e, r));
    Network rnd_rewound = rewind(base, rnd_mask);
    round_cfg.seed = imp_round_seed(cfg.train.seed, r);
    TrainResult rnd_trained =
        train(rnd_rewound, &rnd_mask, train_ds, val_ds, round_cfg, nullptr);
    EvalResult rnd_test = evaluate(rnd_trained.net, &rnd_mask, data.test);

    SurfaceGrid imp_grid =
        compute_surface(cfg, imp.trained, &imp.mask, subset, nullptr);
    SurfaceGrid rnd_grid =
        compute_surface(cfg, rnd_trained.net, &rnd_mask, subset, nullptr);

    std::string pm = pct(imp.p_m);
    imp_grid.meta.extra["label"] = "(imp, " + pm + "%, " +
                                   std::to_string(imp.accuracy) + ")";
    rnd_grid.meta.extra["label"] = "(random, " + pm + "%, " +
                                   std::to_string(rnd_test.accuracy) + ")";

    ComparisonRow row;
    row.round = r;
    row.p_m = imp.p_m;
    row.imp_accuracy = imp.accuracy;
    row.random_accuracy = rnd_test.accuracy;
    row.imp_stats = surface_stats(imp_grid, cfg.stats_epsilon);
    row.random_stats = surface_stats(rnd_grid, cfg.stats_epsilon);
    report.rows.push_back(row);

    std::string rtag = "r" + std::to_string(r);
    save_annotated(pack_ticket(imp, base_dig), cfg,
                   out_path(cfg, "ticket_" + rtag + "_pm" + pm + ".lt"));
    Ticket rnd_ticket;
    rnd_ticket.mask = rnd_mask;
    rnd_ticket.rewound = rnd_rewound;
    rnd_ticket.round = r;
    rnd_ticket.p_m = sparsity(rnd_mask);
    rnd_ticket.accuracy = rnd_test.accuracy;
    save_annotated(pack_ticket(rnd_ticket, base_dig), cfg,
                   out_path(cfg, "random_ticket_" + rtag + "_pm" + pm + ".lt"));
    save_annotated(pack_checkpoint(imp.trained), cfg,
                   out_path(cfg, "imp_trained_" + rtag + ".ckpt"));
    save_annotated(pack_checkpoint(rnd_trained.net), cfg,
                   out_path(cfg, "random_trained_" + rtag + ".ckpt"));
    emit_surface_files(cfg, imp_grid, "surface_imp_" + rtag, log);
    emit_surface_files(cfg, rnd_grid, "surface_random_" + rtag, log);

    log << r << " " << pm << "% " << row.imp_accuracy << " "
        << row.random_accuracy << " " << row.imp_stats.depth << " "
        << row.random_stats.depth << "\n";
  }

  if (!report.rows.empty())
    report.final_gap = report.rows.back().imp_accuracy -
                       report.rows.back().random_accuracy;
  save_annotated(pack_comparison_report(report), cfg,
                 out_path(cfg, "imp_compare.rep"));

  std::ofstream tsv(out_path(cfg, "imp_compare.tsv"));
  tsv << "round\tp_m\timp_acc\trnd_acc\timp_depth\trnd_depth\timp_flat\trnd_"
         "flat\n";
  for (const ComparisonRow& row : report.rows)
    tsv << row.round << "\t" << row.p_m << "\t" << row.imp_accuracy << "\t"
        << row.random_accuracy << "\t" << row.imp_stats.depth << "\t"
        << row.random_stats.depth << "\t" << row.imp_stats.flat_area_fraction
        << "\t" << row.random_stats.flat_area_fraction << "\n";

  log << "final gap (imp - random): " << report.final_gap << "\n";
  return report;
}

}  // namespace lossland
