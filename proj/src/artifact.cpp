#include "lossland/artifact.hpp"

#include <zlib.h>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lossland {

namespace {

constexpr char kMagic[8] = {'L', 'L', 'A', 'R', 'T', 'I', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Cursor {
  const std::uint8_t* p;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > len)
      throw std::runtime_error("artifact corruption error: truncated data");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> b(p + pos, p + pos + n);
    pos += n;
    return b;
  }
};

// ---- payload primitives -------------------------------------------------

void put_doubles(std::vector<std::uint8_t>& out, const double* v,
                 std::size_t n) {
  put_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &v[i], 8);
    put_u64(out, bits);
  }
}

std::vector<double> get_doubles(Cursor& c) {
  std::uint64_t n = c.u64();
  std::vector<double> v(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t bits = c.u64();
    std::memcpy(&v[i], &bits, 8);
  }
  return v;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) put_u64(out, d);
  put_doubles(out, t.data.data(), t.data.size());
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  Cursor c{bytes.data(), bytes.size()};
  std::uint32_t rank = c.u32();
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(c.u64());
  std::vector<double> data = get_doubles(c);
  return Tensor::from(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> encode_i32s(const std::vector<int>& v) {
  std::vector<std::uint8_t> out;
  put_u64(out, v.size());
  for (int x : v) put_u32(out, static_cast<std::uint32_t>(x));
  return out;
}

std::vector<int> decode_i32s(const std::vector<std::uint8_t>& bytes) {
  Cursor c{bytes.data(), bytes.size()};
  std::uint64_t n = c.u64();
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(c.u32());
  return v;
}

// Bit array packed LSB-first; prefix holds the bit count.
std::vector<std::uint8_t> encode_bits(const Tensor& binary) {
  std::vector<std::uint8_t> out;
  put_u64(out, binary.numel());
  std::uint8_t acc = 0;
  int fill = 0;
  for (double v : binary.data) {
    if (v != 0.0) acc |= std::uint8_t(1u << fill);
    if (++fill == 8) {
      out.push_back(acc);
      acc = 0;
      fill = 0;
    }
  }
  if (fill > 0) out.push_back(acc);
  return out;
}

std::vector<double> decode_bits(const std::vector<std::uint8_t>& bytes) {
  Cursor c{bytes.data(), bytes.size()};
  std::uint64_t n = c.u64();
  std::vector<std::uint8_t> packed = c.bytes((n + 7) / 8);
  std::vector<double> v(n);
  for (std::uint64_t i = 0; i < n; ++i)
    v[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
  return v;
}

// ---- small text helpers -------------------------------------------------

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_u64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%" PRIu64, v);
  return buf;
}

double parse_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

std::uint64_t parse_u64(const std::string& s) {
  return std::strtoull(s.c_str(), nullptr, 10);
}

std::string shape_csv(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::size_t> parse_shape_csv(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(parse_u64(tok));
  return out;
}

std::string spec_to_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::dense:
      return "dense in=" + std::to_string(l.in_features) +
             " out=" + std::to_string(l.out_features);
    case LayerKind::conv2d:
      return "conv2d in=" + std::to_string(l.in_channels) +
             " out=" + std::to_string(l.out_channels) +
             " kernel=" + std::to_string(l.kernel) +
             " stride=" + std::to_string(l.stride) +
             " pad=" + std::to_string(l.padding);
    case LayerKind::relu: return "relu";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::dropout: return "dropout rate=" + fmt_double(l.rate);
    case LayerKind::flatten: return "flatten";
    case LayerKind::avg_pool: return "avg_pool k=" + std::to_string(l.pool);
    case LayerKind::residual_add:
      return "residual_add from=" + std::to_string(l.skip_from);
  }
  return "?";
}

LayerSpec spec_from_string(const std::string& s) {
  std::stringstream ss(s);
  std::string kind;
  ss >> kind;
  std::map<std::string, std::string> kv;
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  LayerSpec l;
  l.kind = layer_kind_from_name(kind);
  switch (l.kind) {
    case LayerKind::dense:
      l.in_features = parse_u64(kv.at("in"));
      l.out_features = parse_u64(kv.at("out"));
      break;
    case LayerKind::conv2d:
      l.in_channels = parse_u64(kv.at("in"));
      l.out_channels = parse_u64(kv.at("out"));
      l.kernel = parse_u64(kv.at("kernel"));
      l.stride = parse_u64(kv.at("stride"));
      l.padding = parse_u64(kv.at("pad"));
      break;
    case LayerKind::dropout: l.rate = parse_double(kv.at("rate")); break;
    case LayerKind::avg_pool: l.pool = parse_u64(kv.at("k")); break;
    case LayerKind::residual_add: l.skip_from = parse_u64(kv.at("from")); break;
    default: break;
  }
  return l;
}

const char* kParamNames[6] = {"weight", "bias",     "gamma",
                              "beta",   "run_mean", "run_var"};

Tensor* param_field(LayerParams& lp, int f) {
  Tensor* t[] = {&lp.weight, &lp.bias,     &lp.gamma,
                 &lp.beta,   &lp.run_mean, &lp.run_var};
  return t[f];
}
const Tensor* param_field(const LayerParams& lp, int f) {
  const Tensor* t[] = {&lp.weight, &lp.bias,     &lp.gamma,
                       &lp.beta,   &lp.run_mean, &lp.run_var};
  return t[f];
}

void pack_param_set(ArtifactFile& art, const std::string& prefix,
                    const ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (int f = 0; f < 6; ++f) {
      const Tensor* t = param_field(params[i], f);
      if (t->empty()) continue;
      art.sections.push_back({prefix + "." + std::to_string(i) + "." +
                                  kParamNames[f],
                              encode_tensor(*t)});
    }
}

ParamSet unpack_param_set(const ArtifactFile& art, const std::string& prefix,
                          std::size_t layer_count) {
  ParamSet params(layer_count);
  for (const auto& sec : art.sections) {
    if (sec.name.rfind(prefix + ".", 0) != 0) continue;
    std::string rest = sec.name.substr(prefix.size() + 1);
    auto dot = rest.find('.');
    if (dot == std::string::npos) continue;
    std::size_t layer = parse_u64(rest.substr(0, dot));
    std::string field = rest.substr(dot + 1);
    if (layer >= layer_count)
      throw std::runtime_error("artifact: section layer index out of range");
    for (int f = 0; f < 6; ++f)
      if (field == kParamNames[f])
        *param_field(params[layer], f) = decode_tensor(sec.bytes);
  }
  return params;
}

[[noreturn]] void kind_error(ArtifactKind expected, ArtifactKind found) {
  throw std::runtime_error("artifact kind error: expected " +
                           artifact_kind_name(expected) + ", found " +
                           artifact_kind_name(found));
}

void require_kind(const ArtifactFile& art, ArtifactKind k) {
  if (art.kind != k) kind_error(k, art.kind);
}

}  // namespace

std::string artifact_kind_name(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::checkpoint: return "checkpoint";
    case ArtifactKind::ticket: return "ticket";
    case ArtifactKind::direction: return "direction";
    case ArtifactKind::surface: return "surface";
    case ArtifactKind::report: return "report";
    case ArtifactKind::dataset: return "dataset";
  }
  return "?";
}

const std::string& ArtifactFile::header_value(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw std::runtime_error("artifact: missing header field '" + key + "'");
}

bool ArtifactFile::has_header(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return true;
  return false;
}

const ArtifactSection& ArtifactFile::section(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw std::runtime_error("artifact: missing section '" + name + "'");
}

std::vector<std::uint8_t> encode_artifact(const ArtifactFile& art) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, art.version);
  put_u32(out, static_cast<std::uint32_t>(art.kind));
  put_u32(out, static_cast<std::uint32_t>(art.header.size()));
  for (const auto& [k, v] : art.header) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(art.sections.size()));
  for (const auto& sec : art.sections) {
    put_str(out, sec.name);
    put_u64(out, sec.bytes.size());
    put_u32(out, crc_of(sec.bytes.data(), sec.bytes.size()));
    out.insert(out.end(), sec.bytes.begin(), sec.bytes.end());
  }
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

ArtifactFile decode_artifact(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 4 + 4 + 4 + 4)
    throw std::runtime_error("artifact corruption error: file too short");

  // Whole-file checksum first; nothing is interpreted from a corrupt file.
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= std::uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc_of(bytes.data(), bytes.size() - 4) != stored)
    throw std::runtime_error("artifact corruption error: file checksum mismatch");

  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("artifact format error: bad magic");

  Cursor c{bytes.data(), bytes.size() - 4, 8};
  ArtifactFile art;
  art.version = c.u32();
  if (art.version > kVersion)
    throw std::runtime_error("artifact version error: file version " +
                             std::to_string(art.version) +
                             " is newer than supported version " +
                             std::to_string(kVersion));
  std::uint32_t kind = c.u32();
  if (kind < 1 || kind > 6)
    throw std::runtime_error("artifact format error: unknown kind " +
                             std::to_string(kind));
  art.kind = static_cast<ArtifactKind>(kind);

  std::uint32_t hcount = c.u32();
  for (std::uint32_t i = 0; i < hcount; ++i) {
    std::string k = c.str();
    std::string v = c.str();
    art.header.emplace_back(std::move(k), std::move(v));
  }
  std::uint32_t scount = c.u32();
  for (std::uint32_t i = 0; i < scount; ++i) {
    ArtifactSection sec;
    sec.name = c.str();
    std::uint64_t len = c.u64();
    std::uint32_t crc = c.u32();
    sec.bytes = c.bytes(len);
    if (crc_of(sec.bytes.data(), sec.bytes.size()) != crc)
      throw std::runtime_error(
          "artifact corruption error: section checksum mismatch in '" +
          sec.name + "'");
    art.sections.push_back(std::move(sec));
  }
  if (c.pos != c.len)
    throw std::runtime_error("artifact corruption error: trailing bytes");
  return art;
}

void save_artifact(const ArtifactFile& art,
                   const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = encode_artifact(art);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("artifact: cannot open for writing: " +
                             path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("artifact: write failed: " + path.string());
}

ArtifactFile load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("artifact: cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in)
    throw std::runtime_error("artifact: short read: " + path.string());
  return decode_artifact(bytes);
}

std::string artifact_digest_hex(const ArtifactFile& art) {
  // The digest is the artifact's own body checksum (the trailing crc field).
  std::vector<std::uint8_t> bytes = encode_artifact(art);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x",
                crc_of(bytes.data(), bytes.size() - 4));
  return buf;
}

// ---- checkpoint ----------------------------------------------------------

ArtifactFile pack_checkpoint(const Network& net) {
  ArtifactFile art;
  art.kind = ArtifactKind::checkpoint;
  art.header.emplace_back("input_shape", shape_csv(net.input_shape));
  art.header.emplace_back("seed", fmt_u64(net.seed));
  art.header.emplace_back("layers", std::to_string(net.layers.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    art.header.emplace_back("layer." + std::to_string(i),
                            spec_to_string(net.layers[i]));
  pack_param_set(art, "theta", net.theta);
  pack_param_set(art, "init", net.theta_init);
  return art;
}

Network unpack_checkpoint(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::checkpoint);
  std::size_t count = parse_u64(art.header_value("layers"));
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < count; ++i)
    layers.push_back(
        spec_from_string(art.header_value("layer." + std::to_string(i))));
  std::vector<std::size_t> input_shape =
      parse_shape_csv(art.header_value("input_shape"));
  Network net =
      build_network(layers, input_shape, parse_u64(art.header_value("seed")));
  net.theta = unpack_param_set(art, "theta", count);
  net.theta_init = unpack_param_set(art, "init", count);
  return net;
}

// ---- ticket ---------------------------------------------------------------

ArtifactFile pack_ticket(const Ticket& ticket,
                         const std::string& base_digest) {
  ArtifactFile art;
  art.kind = ArtifactKind::ticket;
  art.header.emplace_back("round", std::to_string(ticket.round));
  art.header.emplace_back("p_m", fmt_double(ticket.p_m));
  art.header.emplace_back("accuracy", fmt_double(ticket.accuracy));
  art.header.emplace_back("base_checkpoint", base_digest);
  art.header.emplace_back("layers",
                          std::to_string(ticket.mask.weights.size()));
  for (std::size_t i = 0; i < ticket.mask.weights.size(); ++i) {
    const Tensor& m = ticket.mask.weights[i];
    art.header.emplace_back("mask." + std::to_string(i) + ".shape",
                            m.empty() ? "" : shape_csv(m.shape));
    if (!m.empty())
      art.sections.push_back({"mask." + std::to_string(i), encode_bits(m)});
  }
  return art;
}

Ticket unpack_ticket(const ArtifactFile& art, const Network& base) {
  require_kind(art, ArtifactKind::ticket);
  Ticket t;
  t.round = parse_u64(art.header_value("round"));
  t.p_m = parse_double(art.header_value("p_m"));
  t.accuracy = parse_double(art.header_value("accuracy"));
  std::size_t count = parse_u64(art.header_value("layers"));
  t.mask.weights.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string shape =
        art.header_value("mask." + std::to_string(i) + ".shape");
    if (shape.empty()) continue;
    std::vector<double> bits =
        decode_bits(art.section("mask." + std::to_string(i)).bytes);
    t.mask.weights[i] = Tensor::from(parse_shape_csv(shape), std::move(bits));
  }
  t.rewound = rewind(base, t.mask);
  return t;
}

// ---- direction -------------------------------------------------------------

ArtifactFile pack_direction(const Direction& d) {
  ArtifactFile art;
  art.kind = ArtifactKind::direction;
  art.header.emplace_back("seed", fmt_u64(d.seed));
  art.header.emplace_back(
      "normalization",
      d.status == NormStatus::filter_normalized ? "filter_normalized" : "raw");
  art.header.emplace_back("layers", std::to_string(d.delta.size()));
  pack_param_set(art, "delta", d.delta);
  return art;
}

Direction unpack_direction(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::direction);
  Direction d;
  d.seed = parse_u64(art.header_value("seed"));
  d.status = art.header_value("normalization") == "filter_normalized"
                 ? NormStatus::filter_normalized
                 : NormStatus::raw;
  d.delta = unpack_param_set(art, "delta",
                             parse_u64(art.header_value("layers")));
  return d;
}

// ---- surface ----------------------------------------------------------------

ArtifactFile pack_surface(const SurfaceGrid& grid) {
  ArtifactFile art;
  art.kind = ArtifactKind::surface;
  const GridSpec& s = grid.spec;
  art.header.emplace_back("alpha_min", fmt_double(s.alpha_min));
  art.header.emplace_back("alpha_max", fmt_double(s.alpha_max));
  art.header.emplace_back("beta_min", fmt_double(s.beta_min));
  art.header.emplace_back("beta_max", fmt_double(s.beta_max));
  art.header.emplace_back("res_a", std::to_string(s.res_a));
  art.header.emplace_back("res_b", std::to_string(s.res_b));
  art.header.emplace_back("d1_seed", fmt_u64(grid.meta.d1_seed));
  art.header.emplace_back("d2_seed", fmt_u64(grid.meta.d2_seed));
  art.header.emplace_back("checkpoint", grid.meta.checkpoint_digest);
  art.header.emplace_back("mask", grid.meta.mask_digest);
  art.header.emplace_back("subset_source", grid.meta.subset_source);
  art.header.emplace_back("subset_n", std::to_string(grid.meta.subset_n));
  art.header.emplace_back("subset_seed", fmt_u64(grid.meta.subset_seed));
  art.header.emplace_back("loss_kind", grid.meta.loss_kind);
  art.header.emplace_back("evals_per_point",
                          std::to_string(grid.meta.evals_per_point));
  for (const auto& [k, v] : grid.meta.extra)
    art.header.emplace_back("x." + k, v);

  Tensor losses;
  losses.shape = {s.res_a, s.res_b};
  losses.data = grid.losses;
  art.sections.push_back({"losses", encode_tensor(losses)});
  std::vector<std::uint8_t> center;
  put_doubles(center, &grid.center_loss, 1);
  art.sections.push_back({"center", std::move(center)});
  return art;
}

SurfaceGrid unpack_surface(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::surface);
  SurfaceGrid grid;
  grid.spec.alpha_min = parse_double(art.header_value("alpha_min"));
  grid.spec.alpha_max = parse_double(art.header_value("alpha_max"));
  grid.spec.beta_min = parse_double(art.header_value("beta_min"));
  grid.spec.beta_max = parse_double(art.header_value("beta_max"));
  grid.spec.res_a = parse_u64(art.header_value("res_a"));
  grid.spec.res_b = parse_u64(art.header_value("res_b"));
  grid.meta.d1_seed = parse_u64(art.header_value("d1_seed"));
  grid.meta.d2_seed = parse_u64(art.header_value("d2_seed"));
  grid.meta.checkpoint_digest = art.header_value("checkpoint");
  grid.meta.mask_digest = art.header_value("mask");
  grid.meta.subset_source = art.header_value("subset_source");
  grid.meta.subset_n = parse_u64(art.header_value("subset_n"));
  grid.meta.subset_seed = parse_u64(art.header_value("subset_seed"));
  grid.meta.loss_kind = art.header_value("loss_kind");
  grid.meta.evals_per_point = parse_u64(art.header_value("evals_per_point"));
  for (const auto& [k, v] : art.header)
    if (k.rfind("x.", 0) == 0) grid.meta.extra[k.substr(2)] = v;

  Tensor losses = decode_tensor(art.section("losses").bytes);
  if (losses.shape.size() != 2 || losses.shape[0] != grid.spec.res_a ||
      losses.shape[1] != grid.spec.res_b)
    throw std::runtime_error("artifact: surface loss array shape mismatch");
  grid.losses = std::move(losses.data);
  Cursor c{art.section("center").bytes.data(),
           art.section("center").bytes.size()};
  grid.center_loss = get_doubles(c).at(0);
  return grid;
}

// ---- reports -----------------------------------------------------------------

ArtifactFile pack_train_report(const TrainReport& report) {
  ArtifactFile art;
  art.kind = ArtifactKind::report;
  art.header.emplace_back("report_type", "train");
  art.header.emplace_back("epochs", std::to_string(report.train_loss.size()));
  art.header.emplace_back("best_epoch", std::to_string(report.best_epoch));
  art.header.emplace_back("wall_seconds", fmt_double(report.wall_seconds));
  auto col = [&](const char* name, const std::vector<double>& v) {
    std::vector<std::uint8_t> bytes;
    put_doubles(bytes, v.data(), v.size());
    art.sections.push_back({name, std::move(bytes)});
  };
  col("train_loss", report.train_loss);
  col("val_loss", report.val_loss);
  col("val_acc", report.val_acc);
  return art;
}

TrainReport unpack_train_report(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::report);
  if (art.header_value("report_type") != "train")
    throw std::runtime_error("artifact kind error: not a train report");
  TrainReport r;
  auto col = [&](const char* name) {
    Cursor c{art.section(name).bytes.data(), art.section(name).bytes.size()};
    return get_doubles(c);
  };
  r.train_loss = col("train_loss");
  r.val_loss = col("val_loss");
  r.val_acc = col("val_acc");
  r.best_epoch = parse_u64(art.header_value("best_epoch"));
  r.wall_seconds = parse_double(art.header_value("wall_seconds"));
  return r;
}

namespace {

const char* kCmpCols[] = {"round",      "p_m",        "imp_acc",
                          "rnd_acc",    "imp_center", "rnd_center",
                          "imp_min",    "rnd_min",    "imp_max",
                          "rnd_max",    "imp_depth",  "rnd_depth",
                          "imp_flat",   "rnd_flat"};

std::vector<double> cmp_column(const ComparisonReport& r, int col) {
  std::vector<double> v;
  for (const auto& row : r.rows) {
    const SurfaceStats& is = row.imp_stats;
    const SurfaceStats& rs = row.random_stats;
    double vals[] = {static_cast<double>(row.round),
                     row.p_m,
                     row.imp_accuracy,
                     row.random_accuracy,
                     is.center_loss,
                     rs.center_loss,
                     is.min_loss,
                     rs.min_loss,
                     is.max_finite_loss,
                     rs.max_finite_loss,
                     is.depth,
                     rs.depth,
                     is.flat_area_fraction,
                     rs.flat_area_fraction};
    v.push_back(vals[col]);
  }
  return v;
}

}  // namespace

ArtifactFile pack_comparison_report(const ComparisonReport& report) {
  ArtifactFile art;
  art.kind = ArtifactKind::report;
  art.header.emplace_back("report_type", "comparison");
  art.header.emplace_back("rows", std::to_string(report.rows.size()));
  art.header.emplace_back("final_gap", fmt_double(report.final_gap));
  for (int c = 0; c < 14; ++c) {
    std::vector<double> col = cmp_column(report, c);
    std::vector<std::uint8_t> bytes;
    put_doubles(bytes, col.data(), col.size());
    art.sections.push_back({kCmpCols[c], std::move(bytes)});
  }
  return art;
}

ComparisonReport unpack_comparison_report(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::report);
  if (art.header_value("report_type") != "comparison")
    throw std::runtime_error("artifact kind error: not a comparison report");
  ComparisonReport r;
  r.final_gap = parse_double(art.header_value("final_gap"));
  std::size_t rows = parse_u64(art.header_value("rows"));
  std::vector<std::vector<double>> cols;
  for (int c = 0; c < 14; ++c) {
    Cursor cur{art.section(kCmpCols[c]).bytes.data(),
               art.section(kCmpCols[c]).bytes.size()};
    cols.push_back(get_doubles(cur));
    if (cols.back().size() != rows)
      throw std::runtime_error("artifact: comparison column length mismatch");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    ComparisonRow row;
    row.round = static_cast<std::size_t>(cols[0][i]);
    row.p_m = cols[1][i];
    row.imp_accuracy = cols[2][i];
    row.random_accuracy = cols[3][i];
    row.imp_stats = {cols[4][i], cols[6][i], cols[8][i], cols[10][i],
                     cols[12][i]};
    row.random_stats = {cols[5][i], cols[7][i], cols[9][i], cols[11][i],
                        cols[13][i]};
    r.rows.push_back(row);
  }
  return r;
}

// ---- dataset -------------------------------------------------------------------

ArtifactFile pack_dataset(const Dataset& ds) {
  ArtifactFile art;
  art.kind = ArtifactKind::dataset;
  art.header.emplace_back("classes", std::to_string(ds.num_classes));
  art.header.emplace_back("split", ds.split);
  art.header.emplace_back("source", ds.source);
  art.sections.push_back({"images", encode_tensor(ds.images)});
  art.sections.push_back({"labels", encode_i32s(ds.labels)});
  return art;
}

Dataset unpack_dataset(const ArtifactFile& art) {
  require_kind(art, ArtifactKind::dataset);
  Dataset ds;
  ds.images = decode_tensor(art.section("images").bytes);
  ds.labels = decode_i32s(art.section("labels").bytes);
  ds.num_classes = parse_u64(art.header_value("classes"));
  ds.split = art.header_value("split");
  ds.source = art.header_value("source");
  return ds;
}

// ---- convenience wrappers ---------------------------------------------------------

void write_artifact(const Network& net, const std::filesystem::path& path) {
  save_artifact(pack_checkpoint(net), path);
}
void write_artifact(const Ticket& t, const std::string& base_digest,
                    const std::filesystem::path& path) {
  save_artifact(pack_ticket(t, base_digest), path);
}
void write_artifact(const Direction& d, const std::filesystem::path& path) {
  save_artifact(pack_direction(d), path);
}
void write_artifact(const SurfaceGrid& g, const std::filesystem::path& path) {
  save_artifact(pack_surface(g), path);
}
void write_artifact(const TrainReport& r, const std::filesystem::path& path) {
  save_artifact(pack_train_report(r), path);
}
void write_artifact(const ComparisonReport& r,
                    const std::filesystem::path& path) {
  save_artifact(pack_comparison_report(r), path);
}
void write_artifact(const Dataset& ds, const std::filesystem::path& path) {
  save_artifact(pack_dataset(ds), path);
}

Network read_checkpoint(const std::filesystem::path& path) {
  return unpack_checkpoint(load_artifact(path));
}
Ticket read_ticket(const std::filesystem::path& path, const Network& base) {
  return unpack_ticket(load_artifact(path), base);
}
Direction read_direction(const std::filesystem::path& path) {
  return unpack_direction(load_artifact(path));
}
SurfaceGrid read_surface(const std::filesystem::path& path) {
  return unpack_surface(load_artifact(path));
}
TrainReport read_train_report(const std::filesystem::path& path) {
  return unpack_train_report(load_artifact(path));
}
ComparisonReport read_comparison_report(const std::filesystem::path& path) {
  return unpack_comparison_report(load_artifact(path));
}
Dataset read_dataset(const std::filesystem::path& path) {
  return unpack_dataset(load_artifact(path));
}

std::string checkpoint_digest(const Network& net) {
  return artifact_digest_hex(pack_checkpoint(net));
}

std::string mask_digest(const Ticket& ticket, const std::string& base_digest) {
  return artifact_digest_hex(pack_ticket(ticket, base_digest));
}

}  // namespace lossland
