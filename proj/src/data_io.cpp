#include "lossland/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "lossland/rng.hpp"

namespace lossland {

Tensor Dataset::gather(const std::vector<std::size_t>& idx) const {
  std::size_t stride = images.numel() / std::max<std::size_t>(size(), 1);
  std::vector<std::size_t> shape = images.shape;
  shape[0] = idx.size();
  Tensor out(shape);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= size())
      throw std::out_of_range("dataset gather: index out of range");
    std::copy_n(images.data.data() + idx[k] * stride, stride,
                out.data.data() + k * stride);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(
    const std::vector<std::size_t>& idx) const {
  std::vector<int> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = labels[idx[k]];
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  if (n > size()) throw std::out_of_range("dataset head: n exceeds size");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Dataset out;
  out.images = gather(idx);
  out.labels.assign(labels.begin(), labels.begin() + n);
  out.num_classes = num_classes;
  out.split = split;
  out.source = source + "[:" + std::to_string(n) + "]";
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("data: cannot open file: " + path);
  in.seekg(0, std::ios::end);
  std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in) throw std::runtime_error("data: short read: " + path);
  return bytes;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  auto ibytes = read_file(images_path);
  auto lbytes = read_file(labels_path);

  if (ibytes.size() < 16)
    throw std::runtime_error("idx: image file too short: " + images_path);
  std::uint32_t imagic = be32(ibytes.data());
  if (imagic != 2051)
    throw std::runtime_error("idx: bad image magic " + std::to_string(imagic) +
                             " (expected 2051) in " + images_path);
  std::uint32_t count = be32(ibytes.data() + 4);
  std::uint32_t rows = be32(ibytes.data() + 8);
  std::uint32_t cols = be32(ibytes.data() + 12);
  std::size_t expect = 16 + std::size_t(count) * rows * cols;
  if (ibytes.size() < expect)
    throw std::runtime_error("idx: truncated image payload in " + images_path +
                             ": header claims " + std::to_string(expect) +
                             " bytes, file has " +
                             std::to_string(ibytes.size()));

  if (lbytes.size() < 8)
    throw std::runtime_error("idx: label file too short: " + labels_path);
  std::uint32_t lmagic = be32(lbytes.data());
  if (lmagic != 2049)
    throw std::runtime_error("idx: bad label magic " + std::to_string(lmagic) +
                             " (expected 2049) in " + labels_path);
  std::uint32_t lcount = be32(lbytes.data() + 4);
  if (lcount != count)
    throw std::runtime_error("idx: image/label count mismatch: " +
                             std::to_string(count) + " vs " +
                             std::to_string(lcount));
  if (lbytes.size() < 8 + std::size_t(lcount))
    throw std::runtime_error("idx: truncated label payload in " + labels_path);

  Dataset ds;
  ds.images = Tensor({count, 1, rows, cols});
  for (std::size_t i = 0; i < std::size_t(count) * rows * cols; ++i)
    ds.images.data[i] = ibytes[16 + i] / 255.0;
  ds.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = lbytes[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  ds.source = images_path;
  return ds;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073;  // 1 label byte + 3*32*32 pixels
  Dataset ds;
  std::size_t total = 0;
  std::vector<std::vector<std::uint8_t>> files;
  for (const auto& path : batch_paths) {
    files.push_back(read_file(path));
    if (files.back().size() % kRecord != 0)
      throw std::runtime_error(
          "cifar10: file size " + std::to_string(files.back().size()) +
          " is not a multiple of 3073: " + path);
    total += files.back().size() / kRecord;
  }
  ds.images = Tensor({total, 3, 32, 32});
  ds.labels.resize(total);
  std::size_t n = 0;
  for (const auto& bytes : files) {
    for (std::size_t r = 0; r + kRecord <= bytes.size(); r += kRecord, ++n) {
      int label = bytes[r];
      if (label > 9)
        throw std::runtime_error("cifar10: label byte " +
                                 std::to_string(label) +
                                 " out of range 0-9 at record " +
                                 std::to_string(n));
      ds.labels[n] = label;
      for (std::size_t i = 0; i < 3072; ++i)
        ds.images.data[n * 3072 + i] = bytes[r + 1 + i] / 255.0;
    }
  }
  ds.num_classes = 10;
  ds.source = batch_paths.empty() ? "cifar10" : batch_paths.front();
  return ds;
}

std::pair<Dataset, Dataset> synth_blobs(std::size_t classes,
                                        std::size_t per_class,
                                        std::size_t dims, double separation,
                                        std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_blobs: classes >= 2");
  if (separation <= 0.0)
    throw std::invalid_argument("synth_blobs: separation must be > 0");
  if (per_class == 0 || dims == 0)
    throw std::invalid_argument("synth_blobs: per_class and dims must be > 0");

  Rng rng(mix_seed(seed, 0xb10b5));
  double box = separation * static_cast<double>(classes);
  std::vector<std::vector<double>> centers;
  constexpr int kMaxRetries = 1000;
  for (std::size_t c = 0; c < classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      std::vector<double> cand(dims);
      for (double& v : cand) v = (rng.uniform() * 2.0 - 1.0) * box;
      bool ok = true;
      for (const auto& prev : centers) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dims; ++k) {
          double d = cand[k] - prev[k];
          d2 += d * d;
        }
        if (d2 < separation * separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centers.push_back(std::move(cand));
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::runtime_error(
          "synth_blobs: could not place class centers at separation " +
          std::to_string(separation) + " in " + std::to_string(dims) +
          " dims after " + std::to_string(kMaxRetries) + " retries");
  }

  std::size_t train_per = static_cast<std::size_t>(
      std::floor(static_cast<double>(per_class) * 0.8));
  std::size_t test_per = per_class - train_per;

  auto blank = [&](std::size_t count, const char* split) {
    Dataset ds;
    ds.images = Tensor({count, dims});
    ds.labels.reserve(count);
    ds.num_classes = classes;
    ds.split = split;
    ds.source = "synth(classes=" + std::to_string(classes) +
                ",per_class=" + std::to_string(per_class) +
                ",dims=" + std::to_string(dims) + ",seed=" +
                std::to_string(seed) + ")";
    return ds;
  };
  Dataset train = blank(train_per * classes, "train");
  Dataset test = blank(test_per * classes, "test");

  std::size_t ti = 0, si = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    Rng point_rng(mix_seed(seed, 1, c));
    for (std::size_t p = 0; p < per_class; ++p) {
      std::vector<double> pt(dims);
      for (std::size_t k = 0; k < dims; ++k)
        pt[k] = centers[c][k] + point_rng.normal();
      if (p < train_per) {
        std::copy(pt.begin(), pt.end(), train.images.data.begin() + ti * dims);
        train.labels.push_back(static_cast<int>(c));
        ++ti;
      } else {
        std::copy(pt.begin(), pt.end(), test.images.data.begin() + si * dims);
        test.labels.push_back(static_cast<int>(c));
        ++si;
      }
    }
  }
  return {std::move(train), std::move(test)};
}

}  // namespace lossland
