#include "nodebnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "nodebnn/errors.hpp"

namespace nodebnn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32be(const std::vector<unsigned char>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw DataError("IDX file truncated in header");
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_u32be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

}  // namespace

Shape Dataset::image_shape() const {
  const Shape& s = images.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::image(int index) const {
  const Shape s = image_shape();
  const std::int64_t n = shape_size(s);
  Tensor out(s);
  std::memcpy(out.data(), images.data() + static_cast<std::size_t>(index) * n,
              static_cast<std::size_t>(n) * sizeof(double));
  return out;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.classes = classes;
  Shape s = images.shape();
  s[0] = static_cast<int>(indices.size());
  out.images = Tensor(s);
  const std::int64_t n = shape_size(image_shape());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size()) throw DataError("subset index out of range");
    std::memcpy(out.images.data() + static_cast<std::int64_t>(i) * n,
                images.data() + static_cast<std::int64_t>(idx) * n,
                static_cast<std::size_t>(n) * sizeof(double));
    out.labels.push_back(labels[static_cast<std::size_t>(idx)]);
  }
  return out;
}

Dataset Dataset::take(int count) const {
  std::vector<int> idx(static_cast<std::size_t>(std::min(count, size())));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return subset(idx);
}

std::pair<Tensor, Tensor> Dataset::batch(const std::vector<int>& order, int begin, int end) const {
  const int b = end - begin;
  Shape s = images.shape();
  s[0] = b;
  Tensor xb(s);
  Tensor yb(Shape{b});
  const std::int64_t n = shape_size(image_shape());
  for (int i = 0; i < b; ++i) {
    const int idx = order[static_cast<std::size_t>(begin + i)];
    std::memcpy(xb.data() + static_cast<std::int64_t>(i) * n,
                images.data() + static_cast<std::int64_t>(idx) * n,
                static_cast<std::size_t>(n) * sizeof(double));
    yb[i] = labels[static_cast<std::size_t>(idx)];
  }
  return {std::move(xb), std::move(yb)};
}

Dataset parse_idx(const std::vector<unsigned char>& image_bytes,
                  const std::vector<unsigned char>& label_bytes, int classes) {
  const std::uint32_t image_magic = read_u32be(image_bytes, 0);
  if (image_magic != kImageMagic) {
    throw DataError("bad image magic number 0x" + std::to_string(image_magic) +
                    ", expected 0x00000803");
  }
  const int n = static_cast<int>(read_u32be(image_bytes, 4));
  const int h = static_cast<int>(read_u32be(image_bytes, 8));
  const int w = static_cast<int>(read_u32be(image_bytes, 12));
  const std::size_t payload = static_cast<std::size_t>(n) * h * w;
  if (image_bytes.size() < 16 + payload) {
    throw DataError("image payload truncated: have " + std::to_string(image_bytes.size() - 16) +
                    " bytes, need " + std::to_string(payload));
  }

  const std::uint32_t label_magic = read_u32be(label_bytes, 0);
  if (label_magic != kLabelMagic) {
    throw DataError("bad label magic number 0x" + std::to_string(label_magic) +
                    ", expected 0x00000801");
  }
  const int n_labels = static_cast<int>(read_u32be(label_bytes, 4));
  if (n_labels != n) {
    throw DataError("image/label count mismatch: " + std::to_string(n) + " images, " +
                    std::to_string(n_labels) + " labels");
  }
  if (label_bytes.size() < 8 + static_cast<std::size_t>(n)) {
    throw DataError("label payload truncated");
  }

  Dataset out;
  out.images = Tensor(Shape{n, 1, h, w});
  for (std::size_t i = 0; i < payload; ++i) {
    out.images[static_cast<std::int64_t>(i)] = static_cast<double>(image_bytes[16 + i]) / 255.0;
  }
  out.labels.resize(static_cast<std::size_t>(n));
  int max_label = 0;
  for (int i = 0; i < n; ++i) {
    out.labels[static_cast<std::size_t>(i)] = label_bytes[8 + static_cast<std::size_t>(i)];
    max_label = std::max(max_label, out.labels[static_cast<std::size_t>(i)]);
  }
  out.classes = classes > 0 ? classes : max_label + 1;
  if (max_label >= out.classes) {
    throw DataError("label " + std::to_string(max_label) + " outside [0," +
                    std::to_string(out.classes) + ")");
  }
  return out;
}

std::vector<unsigned char> serialize_idx_images(const Dataset& data) {
  const Shape s = data.images.shape();
  if (s.size() != 4 || s[1] != 1) throw DataError("IDX serialization expects (N,1,H,W) images");
  std::vector<unsigned char> out;
  out.reserve(16 + static_cast<std::size_t>(data.images.size()));
  write_u32be(out, kImageMagic);
  write_u32be(out, static_cast<std::uint32_t>(s[0]));
  write_u32be(out, static_cast<std::uint32_t>(s[2]));
  write_u32be(out, static_cast<std::uint32_t>(s[3]));
  for (std::int64_t i = 0; i < data.images.size(); ++i) {
    const double v = std::clamp(data.images[i], 0.0, 1.0);
    out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  return out;
}

std::vector<unsigned char> serialize_idx_labels(const Dataset& data) {
  std::vector<unsigned char> out;
  out.reserve(8 + data.labels.size());
  write_u32be(out, kLabelMagic);
  write_u32be(out, static_cast<std::uint32_t>(data.labels.size()));
  for (int y : data.labels) out.push_back(static_cast<unsigned char>(y));
  return out;
}

Dataset load_idx_files(const std::string& image_path, const std::string& label_path, int classes) {
  return parse_idx(read_file(image_path), read_file(label_path), classes);
}

void write_idx_files(const Dataset& data, const std::string& image_path,
                     const std::string& label_path) {
  const std::vector<unsigned char> images = serialize_idx_images(data);
  const std::vector<unsigned char> labels = serialize_idx_labels(data);
  std::ofstream imgs(image_path, std::ios::binary);
  if (!imgs) throw DataError("cannot write " + image_path);
  imgs.write(reinterpret_cast<const char*>(images.data()),
             static_cast<std::streamsize>(images.size()));
  std::ofstream labs(label_path, std::ios::binary);
  if (!labs) throw DataError("cannot write " + label_path);
  labs.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

Dataset load_idx_dir(const std::string& dir, bool train, int classes) {
  namespace fs = std::filesystem;
  const std::string prefix = train ? "train" : "t10k";
  const fs::path images = fs::path(dir) / (prefix + "-images-idx3-ubyte");
  const fs::path labels = fs::path(dir) / (prefix + "-labels-idx1-ubyte");
  return load_idx_files(images.string(), labels.string(), classes);
}

}  // namespace nodebnn
