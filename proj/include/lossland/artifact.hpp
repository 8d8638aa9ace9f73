#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lossland/data_io.hpp"
#include "lossland/directions.hpp"
#include "lossland/network.hpp"
#include "lossland/optim.hpp"
#include "lossland/pruning.hpp"
#include "lossland/reports.hpp"
#include "lossland/surface.hpp"

namespace lossland {

// One persistence container for every artifact kind.
//
// Byte layout (all integers little-endian):
//   magic            8 bytes, "LLARTIF1"
//   version          u32
//   kind             u32 (values below)
//   header_count     u32
//   header entries   u32 key_len, key, u32 val_len, val   (UTF-8 text)
//   section_count    u32
//   sections         u32 name_len, name, u64 payload_len,
//                    u32 crc32(payload), payload
//   file_crc         u32, crc32 of every preceding byte
//
// Doubles inside payloads are raw IEEE-754 bits, so tensors (including the
// loss-grid NaN sentinel) round-trip exactly. The trailing crc is verified
// before any field is interpreted; a single flipped byte anywhere in the
// file is rejected as corruption.
enum class ArtifactKind : std::uint32_t {
  checkpoint = 1,
  ticket = 2,
  direction = 3,
  surface = 4,
  report = 5,
  dataset = 6,
};

std::string artifact_kind_name(ArtifactKind k);

struct ArtifactSection {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

struct ArtifactFile {
  std::uint32_t version = 1;
  ArtifactKind kind = ArtifactKind::checkpoint;
  std::vector<std::pair<std::string, std::string>> header;  // ordered
  std::vector<ArtifactSection> sections;

  const std::string& header_value(const std::string& key) const;
  bool has_header(const std::string& key) const;
  const ArtifactSection& section(const std::string& name) const;
};

std::vector<std::uint8_t> encode_artifact(const ArtifactFile& art);
ArtifactFile decode_artifact(const std::vector<std::uint8_t>& bytes);

void save_artifact(const ArtifactFile& art, const std::filesystem::path& path);
ArtifactFile load_artifact(const std::filesystem::path& path);

// Hex crc32 of the encoded bytes; used to reference artifacts from other
// artifacts' metadata.
std::string artifact_digest_hex(const ArtifactFile& art);

// Object <-> container codecs. pack_* never includes volatile fields
// (surface wall-clock time), so files from repeated runs byte-match.
ArtifactFile pack_checkpoint(const Network& net);
Network unpack_checkpoint(const ArtifactFile& art);

ArtifactFile pack_ticket(const Ticket& ticket, const std::string& base_digest);
// Rebuilds mask + rewound network against the given base; the trained
// snapshot is not part of the file (it is a checkpoint of its own).
Ticket unpack_ticket(const ArtifactFile& art, const Network& base);

ArtifactFile pack_direction(const Direction& d);
Direction unpack_direction(const ArtifactFile& art);

ArtifactFile pack_surface(const SurfaceGrid& grid);
SurfaceGrid unpack_surface(const ArtifactFile& art);

ArtifactFile pack_train_report(const TrainReport& report);
TrainReport unpack_train_report(const ArtifactFile& art);

ArtifactFile pack_comparison_report(const ComparisonReport& report);
ComparisonReport unpack_comparison_report(const ArtifactFile& art);

ArtifactFile pack_dataset(const Dataset& ds);
Dataset unpack_dataset(const ArtifactFile& art);

// write_artifact/read_* convenience wrappers over pack/save.
void write_artifact(const Network& net, const std::filesystem::path& path);
void write_artifact(const Ticket& t, const std::string& base_digest,
                    const std::filesystem::path& path);
void write_artifact(const Direction& d, const std::filesystem::path& path);
void write_artifact(const SurfaceGrid& g, const std::filesystem::path& path);
void write_artifact(const TrainReport& r, const std::filesystem::path& path);
void write_artifact(const ComparisonReport& r,
                    const std::filesystem::path& path);
void write_artifact(const Dataset& ds, const std::filesystem::path& path);

Network read_checkpoint(const std::filesystem::path& path);
Ticket read_ticket(const std::filesystem::path& path, const Network& base);
Direction read_direction(const std::filesystem::path& path);
SurfaceGrid read_surface(const std::filesystem::path& path);
TrainReport read_train_report(const std::filesystem::path& path);
ComparisonReport read_comparison_report(const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::string checkpoint_digest(const Network& net);
std::string mask_digest(const Ticket& ticket, const std::string& base_digest);

}  // namespace lossland
