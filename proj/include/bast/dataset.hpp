#pragma once

#include <cstdint>
#include <string>

#include "bast/model.hpp"

namespace bast {

// IDX pair (big-endian magics 0x00000803 images / 0x00000801 labels).
// Pixels are bytes 0-255, normalized to [0,1] on load.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes = 0);
void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path);

// CSV: one row per image, label followed by row-major pixels 0-255.
Dataset load_csv(const std::string& path, std::size_t channels, std::size_t height,
                 std::size_t width, int num_classes = 0);

// Deterministic desk-scale dataset: a sinusoid grating (random orientation
// per image) whose phase encodes the class, plus a low-amplitude per-class
// pixel marker, random amplitude, and additive Gaussian noise, clipped to
// [0,1]. Adjacent phases are deliberately close so non-targeted attacks are
// much easier than targeted ones, and the marker is an intentionally
// brittle shortcut feature.
Dataset make_synthetic_dataset(std::size_t count, int num_classes, std::size_t height,
                               std::size_t width, std::uint64_t seed, double noise = 0.08);

// "BASTIMG1" raw tensor files: magic, u8 ndim, u32 LE extents, f64 LE data.
void save_tensor_image(const Tensor& t, const std::string& path);
Tensor load_tensor_image(const std::string& path);

// 8-bit greyscale preview (first channel), binary PGM (P5).
void save_pgm(const Tensor& image, const std::string& path);

}  // namespace bast
