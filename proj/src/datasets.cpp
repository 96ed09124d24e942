// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/datasets.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <curl/curl.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <zlib.h>

namespace autorecon {

namespace fs = std::filesystem;

namespace {

std::atomic<std::int64_t> g_training_reads{0};
std::atomic<std::int64_t> g_evaluation_reads{0};

std::vector<std::uint8_t> read_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) fail(ErrorKind::io, fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf{};
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.insert(out.end(), buf.begin(), buf.begin() + n);
  const bool bad = n < 0;
  gzclose(f);
  if (bad) fail(ErrorKind::parse, fmt::format("corrupt archive {}", path.string()));
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

fs::path find_file(const fs::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / stem, dir / (stem + ".gz")}) {
    if (fs::exists(candidate)) return candidate;
  }
  return {};
}

size_t curl_write(char* ptr, size_t size, size_t nmemb, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  out->write(ptr, static_cast<std::streamsize>(size * nmemb));
  return out->good() ? size * nmemb : 0;
}

struct MnistArchive {
  const char* stem;
  const char* md5;
};

// Published archive digests.
constexpr std::array<MnistArchive, 4> kMnistArchives = {{
    {"train-images-idx3-ubyte", "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
    {"train-labels-idx1-ubyte", "d53e105ee54ea40749a09fcbcd1e9432"},
    {"t10k-images-idx3-ubyte", "9fb629c4189551a2d022fa330f9573f3"},
    {"t10k-labels-idx1-ubyte", "ec29112dd5afa0611ce80d1b7f02629c"},
}};
constexpr const char* kCifarArchiveMd5 = "c32a1d4ab5d03f1284b67883e8d87530";

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

/// Extracts regular files from a gzip-compressed ustar archive into `dest`.
void extract_tar_gz(const fs::path& archive, const fs::path& dest) {
  const auto bytes = read_gz(archive);
  std::size_t off = 0;
  while (off + 512 <= bytes.size()) {
    const char* header = reinterpret_cast<const char*>(bytes.data() + off);
    if (header[0] == '\0') break;
    std::string name(header, strnlen(header, 100));
    const auto size = std::strtoull(std::string(header + 124, 12).c_str(), nullptr, 8);
    const char type = header[156];
    off += 512;
    if (type == '0' || type == '\0') {
      const auto target = dest / fs::path(name).filename();
      std::ofstream out(target, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data() + off), static_cast<std::streamsize>(size));
    }
    off += (size + 511) / 512 * 512;
  }
}

torch::Tensor normalize(const torch::Tensor& u8) { return u8.to(torch::kFloat32).div(127.5).sub(1.0); }

}  // namespace

void DataAudit::record(DataPurpose purpose, std::int64_t samples) {
  (purpose == DataPurpose::training ? g_training_reads : g_evaluation_reads).fetch_add(samples);
}
std::int64_t DataAudit::training_reads() { return g_training_reads.load(); }
std::int64_t DataAudit::evaluation_reads() { return g_evaluation_reads.load(); }
void DataAudit::reset() {
  g_training_reads = 0;
  g_evaluation_reads = 0;
}

LabeledDataset::LabeledDataset(torch::Tensor images, torch::Tensor labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.dim() != 4 || labels_.dim() != 1 || images_.size(0) != labels_.size(0))
    fail(ErrorKind::input, "dataset needs NCHW images and one label per image");
}

ImageShape LabeledDataset::image_shape() const {
  if (empty()) return {};
  return {images_.size(1), images_.size(2), images_.size(3)};
}

std::pair<torch::Tensor, torch::Tensor> LabeledDataset::batch(std::int64_t begin, std::int64_t end,
                                                              DataPurpose purpose) const {
  begin = std::clamp<std::int64_t>(begin, 0, size());
  end = std::clamp<std::int64_t>(end, begin, size());
  DataAudit::record(purpose, end - begin);
  return {images_.slice(0, begin, end), labels_.slice(0, begin, end)};
}

std::pair<torch::Tensor, torch::Tensor> LabeledDataset::gather(const torch::Tensor& indices,
                                                               DataPurpose purpose) const {
  DataAudit::record(purpose, indices.numel());
  return {images_.index_select(0, indices), labels_.index_select(0, indices)};
}

fs::path resolve_data_dir(const fs::path& configured) {
  return fs::path(env_or("AUTORECON_DATA_DIR", configured.string()));
}

torch::Tensor read_idx_images(const fs::path& path) {
  const auto b = read_gz(path);
  if (b.size() < 16 || be32(b, 0) != 0x803) fail(ErrorKind::parse, fmt::format("{} is not an IDX image file", path.string()));
  const std::int64_t n = be32(b, 4), h = be32(b, 8), w = be32(b, 12);
  if (b.size() != static_cast<std::size_t>(16 + n * h * w))
    fail(ErrorKind::parse, fmt::format("{}: truncated IDX payload", path.string()));
  auto t = torch::empty({n, h, w}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), b.data() + 16, static_cast<std::size_t>(n * h * w));
  return t;
}

torch::Tensor read_idx_labels(const fs::path& path) {
  const auto b = read_gz(path);
  if (b.size() < 8 || be32(b, 0) != 0x801) fail(ErrorKind::parse, fmt::format("{} is not an IDX label file", path.string()));
  const std::int64_t n = be32(b, 4);
  if (b.size() != static_cast<std::size_t>(8 + n)) fail(ErrorKind::parse, fmt::format("{}: truncated IDX payload", path.string()));
  auto t = torch::empty({n}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), b.data() + 8, static_cast<std::size_t>(n));
  return t.to(torch::kLong);
}

std::pair<torch::Tensor, torch::Tensor> read_cifar_batch(const fs::path& path) {
  const auto b = read_gz(path);
  constexpr std::size_t kRecord = 1 + 3072;
  if (b.empty() || b.size() % kRecord != 0)
    fail(ErrorKind::parse, fmt::format("{}: size is not a multiple of {}", path.string(), kRecord));
  const auto n = static_cast<std::int64_t>(b.size() / kRecord);
  auto images = torch::empty({n, 3, 32, 32}, torch::kUInt8);
  auto labels = torch::empty({n}, torch::kLong);
  auto* img = images.data_ptr<std::uint8_t>();
  auto* lab = labels.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < n; ++i) {
    lab[i] = b[i * kRecord];
    std::memcpy(img + i * 3072, b.data() + i * kRecord + 1, 3072);
  }
  return {images, labels};
}

LabeledDataset load_mnist_like(const fs::path& root, Split split, const LoadOptions& options) {
  const auto dir = root / "mnist_like";
  const std::string prefix = split == Split::train ? "train" : "t10k";
  auto images_path = find_file(dir, prefix + "-images-idx3-ubyte");
  auto labels_path = find_file(dir, prefix + "-labels-idx1-ubyte");
  if (images_path.empty() || labels_path.empty()) {
    if (!options.allow_download)
      fail(ErrorKind::io, fmt::format("mnist_like {} split not found under {} (downloads disabled)", prefix,
                                      dir.string()));
    fs::create_directories(dir);
    const auto mirror = env_or("AUTORECON_MNIST_MIRROR", "https://ossci-datasets.s3.amazonaws.com/mnist/");
    for (const auto& a : kMnistArchives) {
      const auto dest = dir / (std::string(a.stem) + ".gz");
      if (!fs::exists(dest)) download_verified(mirror + a.stem + ".gz", dest, a.md5);
    }
    images_path = find_file(dir, prefix + "-images-idx3-ubyte");
    labels_path = find_file(dir, prefix + "-labels-idx1-ubyte");
  }
  const auto raw = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (raw.size(0) != labels.size(0)) fail(ErrorKind::parse, "mnist_like image/label counts differ");
  const auto pad_h = std::max<std::int64_t>(0, 32 - raw.size(1));
  const auto pad_w = std::max<std::int64_t>(0, 32 - raw.size(2));
  auto images = normalize(raw).unsqueeze(1);
  images = torch::constant_pad_nd(images, {pad_w / 2, pad_w - pad_w / 2, pad_h / 2, pad_h - pad_h / 2}, -1.0);
  return {images.contiguous(), labels};
}

LabeledDataset load_cifar_like(const fs::path& root, Split split, const LoadOptions& options) {
  const auto dir = root / "cifar_like";
  std::vector<std::string> names;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) names.push_back(fmt::format("data_batch_{}.bin", i));
  } else {
    names.push_back("test_batch.bin");
  }
  const bool present = std::all_of(names.begin(), names.end(), [&](const auto& n) { return !find_file(dir, n).empty(); });
  if (!present) {
    if (!options.allow_download)
      fail(ErrorKind::io, fmt::format("cifar_like batches not found under {} (downloads disabled)", dir.string()));
    fs::create_directories(dir);
    const auto archive = dir / "cifar-10-binary.tar.gz";
    download_verified(env_or("AUTORECON_CIFAR_URL", "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"),
                      archive, kCifarArchiveMd5);
    extract_tar_gz(archive, dir);
  }
  std::vector<torch::Tensor> images, labels;
  for (const auto& n : names) {
    auto [x, y] = read_cifar_batch(find_file(dir, n));
    images.push_back(x);
    labels.push_back(y);
  }
  return {normalize(torch::cat(images)).contiguous(), torch::cat(labels)};
}

LabeledDataset load_dataset(const std::string& name, const fs::path& root, Split split, const LoadOptions& options) {
  if (name == "mnist_like") return load_mnist_like(root, split, options);
  if (name == "cifar_like") return load_cifar_like(root, split, options);
  fail(ErrorKind::config, fmt::format("unknown dataset '{}'", name));
}

std::string md5_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, fmt::format("cannot read {}", path.string()));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_md5(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void download_verified(const std::string& url, const fs::path& dest, const std::string& md5_hex) {
  const auto partial = fs::path(dest.string() + ".part");
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) fail(ErrorKind::io, fmt::format("cannot write {}", partial.string()));
    CURL* curl = curl_easy_init();
    if (curl == nullptr) fail(ErrorKind::io, "libcurl initialization failed");
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, curl_write);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) {
      out.close();
      fs::remove(partial);
      fail(ErrorKind::io, fmt::format("download of {} failed: {}", url, curl_easy_strerror(rc)));
    }
  }
  const auto digest = md5_file(partial);
  if (digest != md5_hex) {
    fs::remove(partial);
    fail(ErrorKind::io, fmt::format("checksum mismatch for {}: got {}, expected {}", url, digest, md5_hex));
  }
  fs::rename(partial, dest);
}

}  // namespace autorecon
