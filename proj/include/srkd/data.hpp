// Dataset ingestion and batching.
//
// IDX (MNIST/Fashion-MNIST), optionally gzip-compressed:
//   images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then pixels
//   labels: u32 magic 0x00000801, u32 count, then label bytes
//   all header integers big-endian; pixels scaled to [0,1] by /255
//
// CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes (3x32x32,
// plane-major), multiple records per batch file.
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/tensor.hpp"

namespace srkd {

struct SampleRecord {
  std::size_t index;  // stable id, assigned by file order at load time
  Tensor image;
  int label;
};

struct Dataset {
  std::string name;
  std::size_t classes = 0;
  std::vector<std::size_t> image_shape;  // per-sample shape (CHW for image data)
  std::vector<double> pixels;            // size() * prod(image_shape), row-major
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_numel() const {
    std::size_t n = 1;
    for (std::size_t e : image_shape) n *= e;
    return n;
  }

  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * sample_numel(), sample_numel()};
  }

  SampleRecord record(std::size_t i) const {
    auto img = image(i);
    return {i, Tensor(image_shape, std::vector<double>(img.begin(), img.end())), labels[i]};
  }

  // Gathers the given samples into a [B] + image_shape tensor.
  Tensor batch(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> shape{indices.size()};
    shape.insert(shape.end(), image_shape.begin(), image_shape.end());
    Tensor out(shape);
    const std::size_t n = sample_numel();
    for (std::size_t b = 0; b < indices.size(); ++b) {
      std::memcpy(out.data.data() + b * n, pixels.data() + indices[b] * n, n * sizeof(double));
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline bool is_gzip(const std::vector<std::uint8_t>& b) {
  return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                        const std::string& path) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 16) != Z_OK) throw IoError("zlib init failed");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    strm.next_out = buf;
    strm.avail_out = sizeof buf;
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw DataFormatError("corrupt gzip stream in '" + path + "'");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - strm.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&strm);
  return out;
}

inline std::uint32_t be_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline std::size_t derive_classes(const std::vector<int>& labels) {
  int mx = -1;
  for (int l : labels) mx = std::max(mx, l);
  return static_cast<std::size_t>(mx + 1);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 3*32*32 pixels

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  auto img = detail::read_file_bytes(images_path);
  if (detail::is_gzip(img)) img = detail::gunzip(img, images_path);
  auto lab = detail::read_file_bytes(labels_path);
  if (detail::is_gzip(lab)) lab = detail::gunzip(lab, labels_path);

  if (img.size() < 16) throw DataFormatError("truncated IDX image header in '" + images_path + "'");
  if (detail::be_u32(img.data()) != kIdxImageMagic) {
    throw DataFormatError("bad IDX image magic in '" + images_path + "': expected 0x00000803");
  }
  const std::size_t n = detail::be_u32(img.data() + 4);
  const std::size_t rows = detail::be_u32(img.data() + 8);
  const std::size_t cols = detail::be_u32(img.data() + 12);
  if (img.size() != 16 + n * rows * cols) {
    throw DataFormatError("truncated IDX image payload in '" + images_path + "': expected " +
                          std::to_string(16 + n * rows * cols) + " bytes, got " +
                          std::to_string(img.size()));
  }

  if (lab.size() < 8) throw DataFormatError("truncated IDX label header in '" + labels_path + "'");
  if (detail::be_u32(lab.data()) != kIdxLabelMagic) {
    throw DataFormatError("bad IDX label magic in '" + labels_path + "': expected 0x00000801");
  }
  const std::size_t nl = detail::be_u32(lab.data() + 4);
  if (lab.size() != 8 + nl) {
    throw DataFormatError("truncated IDX label payload in '" + labels_path + "': expected " +
                          std::to_string(8 + nl) + " bytes, got " + std::to_string(lab.size()));
  }
  if (n != nl) {
    throw DataFormatError("IDX image/label count mismatch: " + std::to_string(n) + " images in '" +
                          images_path + "' vs " + std::to_string(nl) + " labels in '" +
                          labels_path + "'");
  }

  Dataset d;
  d.name = "idx";
  d.image_shape = {1, rows, cols};
  d.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < n * rows * cols; ++i) d.pixels[i] = img[16 + i] / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = lab[8 + i];
  d.classes = detail::derive_classes(d.labels);
  return d;
}

inline Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  if (batch_paths.empty()) throw InvalidParameterError("load_cifar10 needs at least one file");
  Dataset d;
  d.name = "cifar10";
  d.image_shape = {3, 32, 32};
  for (const std::string& path : batch_paths) {
    auto bytes = detail::read_file_bytes(path);
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
      throw DataFormatError("CIFAR-10 batch '" + path + "' length " + std::to_string(bytes.size()) +
                            " is not a positive multiple of " + std::to_string(kCifarRecordBytes));
    }
    const std::size_t records = bytes.size() / kCifarRecordBytes;
    for (std::size_t r = 0; r < records; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
      d.labels.push_back(rec[0]);
      for (std::size_t i = 0; i < kCifarRecordBytes - 1; ++i) d.pixels.push_back(rec[1 + i] / 255.0);
    }
  }
  d.classes = detail::derive_classes(d.labels);
  return d;
}

// Gaussian clusters with unit variance; class centers sit on distinct axes
// scaled so that every pair of centers is exactly `separation` apart.
// Samples are ordered class-major; deterministic per seed.
inline Dataset synthetic_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                               double separation, std::uint64_t seed) {
  if (classes == 0 || per_class == 0) {
    throw InvalidParameterError("synthetic_blobs needs classes >= 1 and per_class >= 1");
  }
  if (dim < classes) {
    throw InvalidParameterError("synthetic_blobs needs dim >= classes (one center axis per class)");
  }
  if (!(separation >= 0.0)) {
    throw InvalidParameterError("synthetic_blobs separation must be >= 0");
  }
  Rng rng(seed);
  Dataset d;
  d.name = "synthetic";
  d.classes = classes;
  d.image_shape = {dim};
  d.pixels.reserve(classes * per_class * dim);
  d.labels.reserve(classes * per_class);
  const double scale = separation / std::sqrt(2.0);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      for (std::size_t k = 0; k < dim; ++k) {
        d.pixels.push_back((k == c ? scale : 0.0) + rng.normal());
      }
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

struct ClassPartition {
  std::vector<std::vector<std::size_t>> by_class;  // disjoint, union = [0, t)
};

inline ClassPartition class_partition(const Dataset& d) {
  ClassPartition p;
  p.by_class.resize(d.classes);
  for (std::size_t i = 0; i < d.size(); ++i) {
    p.by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  }
  return p;
}

// Epoch-wise shuffled visit order, reproducible from (seed, epoch).
struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 512;

  std::vector<std::size_t> epoch_order(std::size_t t, std::uint64_t epoch) const {
    std::vector<std::size_t> order(t);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_stream(seed, epoch));
    shuffle(order, rng);
    return order;
  }
};

// ---- fixture/round-trip writers ----

namespace detail {

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes,
                             bool gzip_compress) {
  if (gzip_compress) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    if (!bytes.empty() &&
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) !=
            static_cast<int>(bytes.size())) {
      gzclose(f);
      throw IoError("short gzip write to '" + path + "'");
    }
    gzclose(f);
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

inline void push_be_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline std::uint8_t quantize_pixel(double v) {
  const long q = std::lround(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const Dataset& d, bool gzip_compress = false) {
  if (d.image_shape.size() != 3 || d.image_shape[0] != 1) {
    throw InvalidParameterError("write_idx expects single-channel [1, H, W] images");
  }
  std::vector<std::uint8_t> img;
  detail::push_be_u32(img, kIdxImageMagic);
  detail::push_be_u32(img, static_cast<std::uint32_t>(d.size()));
  detail::push_be_u32(img, static_cast<std::uint32_t>(d.image_shape[1]));
  detail::push_be_u32(img, static_cast<std::uint32_t>(d.image_shape[2]));
  for (double v : d.pixels) img.push_back(quantize_pixel(v));
  detail::write_file_bytes(images_path, img, gzip_compress);

  std::vector<std::uint8_t> lab;
  detail::push_be_u32(lab, kIdxLabelMagic);
  detail::push_be_u32(lab, static_cast<std::uint32_t>(d.size()));
  for (int l : d.labels) lab.push_back(static_cast<std::uint8_t>(l));
  detail::write_file_bytes(labels_path, lab, gzip_compress);
}

inline void write_cifar10_batch(const std::string& path, const Dataset& d) {
  if (d.image_shape != std::vector<std::size_t>{3, 32, 32}) {
    throw InvalidParameterError("write_cifar10_batch expects [3, 32, 32] images");
  }
  std::vector<std::uint8_t> out;
  out.reserve(d.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.push_back(static_cast<std::uint8_t>(d.labels[i]));
    for (double v : d.image(i)) out.push_back(quantize_pixel(v));
  }
  detail::write_file_bytes(path, out, false);
}

}  // namespace srkd
