#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "lossland/artifact.hpp"
#include "lossland/data_io.hpp"
#include "lossland/directions.hpp"
#include "lossland/pruning.hpp"
#include "lossland/surface.hpp"

using namespace lossland;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("lossland_artifact_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Network sample_net() {
  Network net = build_network(
      {LayerSpec::Conv2d(1, 2, 3), LayerSpec::BatchNorm(), LayerSpec::Relu(),
       LayerSpec::AvgPool(2), LayerSpec::Flatten(), LayerSpec::Dropout(0.25),
       LayerSpec::Dense(8, 3)},
      {1, 6, 6}, 2024);
  net.theta[1].run_mean.fill(0.125);  // non-trivial running stats
  net.theta[1].run_var.fill(2.5);
  return net;
}

SurfaceGrid sample_surface() {
  SurfaceGrid grid;
  grid.spec.res_a = 4;
  grid.spec.res_b = 3;
  grid.losses = {0.1, 0.2, 0.3, 0.4,          kLossSentinel, 0.6,
                 0.7, 0.8, 0.9, 1.0,          1.1,           1.2};
  grid.center_loss = 0.55;
  grid.meta.d1_seed = 11;
  grid.meta.d2_seed = 12;
  grid.meta.checkpoint_digest = "deadbeef";
  grid.meta.mask_digest = "";
  grid.meta.subset_source = "synth(...)";
  grid.meta.subset_n = 250;
  grid.meta.subset_seed = 7;
  grid.meta.evals_per_point = 250;
  grid.meta.wall_seconds = 123.456;  // volatile, must not persist
  grid.meta.extra["config"] = "cafe0123";
  return grid;
}

// Byte-level round trip: encode, decode, re-encode, compare.
template <typename Obj, typename PackFn, typename UnpackFn>
void check_roundtrip(const Obj& obj, PackFn pack, UnpackFn unpack) {
  ArtifactFile art = pack(obj);
  std::vector<std::uint8_t> bytes = encode_artifact(art);
  ArtifactFile decoded = decode_artifact(bytes);
  Obj back = unpack(decoded);
  std::vector<std::uint8_t> bytes2 = encode_artifact(pack(back));
  CHECK(bytes == bytes2);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  Network net = sample_net();
  check_roundtrip(
      net, [](const Network& n) { return pack_checkpoint(n); },
      [](const ArtifactFile& a) { return unpack_checkpoint(a); });

  Network back = unpack_checkpoint(decode_artifact(
      encode_artifact(pack_checkpoint(net))));
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    CHECK(back.theta[i].weight.data == net.theta[i].weight.data);
    CHECK(back.theta_init[i].weight.data == net.theta_init[i].weight.data);
    CHECK(back.theta[i].run_mean.data == net.theta[i].run_mean.data);
    CHECK(back.theta[i].run_var.data == net.theta[i].run_var.data);
  }
  CHECK(back.seed == net.seed);
  CHECK(back.input_shape == net.input_shape);
}

TEST_CASE("ticket round trip rebuilds mask and rewound network") {
  Network base = build_network({LayerSpec::Dense(6, 10), LayerSpec::Relu(),
                                LayerSpec::Dense(10, 2)},
                               {6}, 5);
  Mask m = prune_step(base.theta, full_mask(base), 0.4);
  Ticket t;
  t.mask = m;
  t.rewound = rewind(base, m);
  t.round = 3;
  t.p_m = sparsity(m);
  t.accuracy = 0.875;

  check_roundtrip(
      t, [](const Ticket& x) { return pack_ticket(x, "0011aabb"); },
      [&](const ArtifactFile& a) { return unpack_ticket(a, base); });

  Ticket back = unpack_ticket(
      decode_artifact(encode_artifact(pack_ticket(t, "0011aabb"))), base);
  CHECK(back.round == 3);
  CHECK(back.p_m == t.p_m);
  CHECK(back.accuracy == 0.875);
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    CHECK(back.mask.weights[i].data == m.weights[i].data);
    CHECK(back.rewound.theta[i].weight.data == t.rewound.theta[i].weight.data);
  }
}

TEST_CASE("direction round trip keeps seeds and normalization flag") {
  Network net = sample_net();
  Direction d = filter_normalize(sample_direction(net, 909), net);
  check_roundtrip(
      d, [](const Direction& x) { return pack_direction(x); },
      [](const ArtifactFile& a) { return unpack_direction(a); });

  Direction back = unpack_direction(
      decode_artifact(encode_artifact(pack_direction(d))));
  CHECK(back.seed == 909);
  CHECK(back.status == NormStatus::filter_normalized);
  for (std::size_t i = 0; i < d.delta.size(); ++i)
    CHECK(back.delta[i].weight.data == d.delta[i].weight.data);
}

TEST_CASE("surface round trip preserves the sentinel and drops wall time") {
  SurfaceGrid grid = sample_surface();
  check_roundtrip(
      grid, [](const SurfaceGrid& g) { return pack_surface(g); },
      [](const ArtifactFile& a) { return unpack_surface(a); });

  SurfaceGrid back =
      unpack_surface(decode_artifact(encode_artifact(pack_surface(grid))));
  CHECK(back.losses.size() == grid.losses.size());
  for (std::size_t i = 0; i < grid.losses.size(); ++i) {
    if (finite_loss(grid.losses[i]))
      CHECK(back.losses[i] == grid.losses[i]);
    else
      CHECK(!finite_loss(back.losses[i]));
  }
  CHECK(back.center_loss == grid.center_loss);
  CHECK(back.meta.d1_seed == 11);
  CHECK(back.meta.extra.at("config") == "cafe0123");
  CHECK(back.meta.wall_seconds == 0.0);  // never serialized
}

TEST_CASE("report round trips") {
  TrainReport tr;
  tr.train_loss = {1.0, 0.5, 0.25};
  tr.val_loss = {1.1, 0.6, 0.4};
  tr.val_acc = {0.3, 0.7, 0.9};
  tr.best_epoch = 2;
  tr.wall_seconds = 3.25;
  check_roundtrip(
      tr, [](const TrainReport& r) { return pack_train_report(r); },
      [](const ArtifactFile& a) { return unpack_train_report(a); });

  ComparisonReport cr;
  ComparisonRow row;
  row.round = 5;
  row.p_m = 0.59;
  row.imp_accuracy = 0.9;
  row.random_accuracy = 0.6;
  row.imp_stats = {0.1, 0.05, 2.0, 1.9, 0.25};
  row.random_stats = {0.9, 0.6, 1.0, 0.1, 0.8};
  cr.rows = {row};
  cr.final_gap = 0.3;
  check_roundtrip(
      cr, [](const ComparisonReport& r) { return pack_comparison_report(r); },
      [](const ArtifactFile& a) { return unpack_comparison_report(a); });

  ComparisonReport back = unpack_comparison_report(
      decode_artifact(encode_artifact(pack_comparison_report(cr))));
  CHECK(back.rows.size() == 1);
  CHECK(back.rows[0].imp_stats.depth == 1.9);
  CHECK(back.rows[0].random_stats.flat_area_fraction == 0.8);
}

TEST_CASE("dataset round trip") {
  auto [train_ds, test_ds] = synth_blobs(2, 25, 3, 8.0, 3);
  check_roundtrip(
      train_ds, [](const Dataset& d) { return pack_dataset(d); },
      [](const ArtifactFile& a) { return unpack_dataset(a); });

  Dataset back =
      unpack_dataset(decode_artifact(encode_artifact(pack_dataset(train_ds))));
  CHECK(back.images.data == train_ds.images.data);
  CHECK(back.labels == train_ds.labels);
  CHECK(back.num_classes == 2);
  CHECK(back.split == "train");
}

TEST_CASE("file write/read round trip") {
  TempDir dir;
  Network net = sample_net();
  fs::path p = dir.path / "net.ckpt";
  write_artifact(net, p);
  Network back = read_checkpoint(p);
  for (std::size_t i = 0; i < net.theta.size(); ++i)
    CHECK(back.theta[i].weight.data == net.theta[i].weight.data);

  // Writing the read object again produces identical bytes.
  fs::path p2 = dir.path / "net2.ckpt";
  write_artifact(back, p2);
  std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("every single flipped byte is rejected") {
  Network base = build_network({LayerSpec::Dense(3, 4)}, {3}, 1);
  Mask m = prune_step(base.theta, full_mask(base), 0.3);
  Ticket t;
  t.mask = m;
  t.rewound = rewind(base, m);
  t.p_m = sparsity(m);
  std::vector<std::uint8_t> bytes = encode_artifact(pack_ticket(t, "00000000"));

  std::size_t rejected = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    std::vector<std::uint8_t> corrupt = bytes;
    corrupt[i] ^= 0xff;
    try {
      decode_artifact(corrupt);
    } catch (const std::exception&) {
      ++rejected;
    }
  }
  CHECK(rejected == bytes.size());
}

TEST_CASE("truncated files yield no partial object") {
  SurfaceGrid grid = sample_surface();
  std::vector<std::uint8_t> bytes = encode_artifact(pack_surface(grid));
  for (std::size_t keep :
       {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + keep);
    CHECK_THROWS_AS(decode_artifact(cut), std::runtime_error);
  }
}

TEST_CASE("kind mismatches are reported as kind errors") {
  TempDir dir;
  Network base = build_network({LayerSpec::Dense(3, 4)}, {3}, 1);
  Ticket t;
  t.mask = full_mask(base);
  t.rewound = base;
  t.p_m = 1.0;
  fs::path p = dir.path / "ticket.lt";
  write_artifact(t, "00000000", p);

  CHECK_THROWS_WITH_AS(read_surface(p),
                       doctest::Contains("expected surface, found ticket"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_checkpoint(p), std::runtime_error);
  CHECK_NOTHROW(read_ticket(p, base));
}

TEST_CASE("newer versions and unknown kinds are rejected") {
  Network net = build_network({LayerSpec::Dense(2, 2)}, {2}, 1);
  ArtifactFile art = pack_checkpoint(net);
  art.version = 2;
  CHECK_THROWS_WITH_AS(decode_artifact(encode_artifact(art)),
                       doctest::Contains("version"), std::runtime_error);

  ArtifactFile odd = pack_checkpoint(net);
  odd.kind = static_cast<ArtifactKind>(9);
  CHECK_THROWS_WITH_AS(decode_artifact(encode_artifact(odd)),
                       doctest::Contains("unknown kind"), std::runtime_error);
}

TEST_CASE("digest is stable and content-sensitive") {
  Network net = sample_net();
  CHECK(checkpoint_digest(net) == checkpoint_digest(net));
  Network other = net;
  other.theta[0].weight.data[0] += 1e-9;
  CHECK(checkpoint_digest(net) != checkpoint_digest(other));
}
