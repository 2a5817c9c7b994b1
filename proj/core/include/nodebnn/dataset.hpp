#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodebnn/tensor.hpp"

namespace nodebnn {

/// Images (N, C, H, W) with pixels in [0,1] plus integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int classes = 0;

  int size() const { return labels.empty() ? 0 : images.extent(0); }
  Shape image_shape() const;  // (C, H, W)
  Tensor image(int index) const;
  Dataset subset(const std::vector<int>& indices) const;
  Dataset take(int count) const;

  /// Batch tensors for indices [begin, end): images (b, C,H,W), labels (b,).
  std::pair<Tensor, Tensor> batch(const std::vector<int>& order, int begin, int end) const;
};

/// Parses the IDX binary pair (big-endian magic + dims + ubyte payload);
/// pixels are rescaled from [0,255] to [0,1].
Dataset parse_idx(const std::vector<unsigned char>& image_bytes,
                  const std::vector<unsigned char>& label_bytes, int classes = 0);

/// IDX serialization; pixels are quantized back to bytes, so only datasets
/// whose pixels are multiples of 1/255 round-trip bit-exactly.
std::vector<unsigned char> serialize_idx_images(const Dataset& data);
std::vector<unsigned char> serialize_idx_labels(const Dataset& data);

Dataset load_idx_files(const std::string& image_path, const std::string& label_path, int classes = 0);
void write_idx_files(const Dataset& data, const std::string& image_path,
                     const std::string& label_path);

/// Loads train-images-idx3-ubyte / train-labels-idx1-ubyte (train=true) or the
/// t10k pair from a directory.
Dataset load_idx_dir(const std::string& dir, bool train, int classes = 0);

}  // namespace nodebnn
