#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsgs/core_types.hpp"

namespace tsgs {

enum class Split { train, holdout };

struct DatasetView {
  std::string name;
  Camera camera;
  ViewBundle bundle;
  Split split = Split::train;
};

struct Dataset {
  std::filesystem::path root;
  int instance_count = 0;
  std::optional<Box3> bounds;
  std::vector<DatasetView> views;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<Camera> cameras() const;
};

/// One view record as written in a manifest. Paths are relative to the manifest directory.
struct ManifestView {
  std::string name;
  std::string image, mask, depth;
  Camera camera;
  Split split = Split::train;
};

struct Manifest {
  int instance_count = 0;
  std::optional<Box3> bounds;
  std::vector<ManifestView> views;
};

inline constexpr const char* kManifestName = "manifest.txt";

Manifest parse_manifest(const std::string& text);
std::string format_manifest(const Manifest& manifest);

/// Loads and validates every view; all problems are reported together in one load error.
/// `manifest_path` may name the manifest file or its directory.
Dataset load_dataset(const std::filesystem::path& manifest_path, int dilation_px = 12);

/// 8-bit image as stored on disk.
struct Png8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;
};

Png8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Png8& image);

double srgb_to_linear(double v);
double linear_to_srgb(double v);
/// Linear RGB in [0,1] → 8-bit sRGB (rounded, clamped).
Png8 encode_srgb(const ImageD& linear);
ImageD decode_srgb(const Png8& png);

ImageD read_pfm(const std::filesystem::path& path);
/// Single-channel little-endian PFM, values stored as float32.
void write_pfm(const std::filesystem::path& path, const ImageD& depth);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GaussianCloud cloud;
  ClassHead head;
  std::uint64_t iteration = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const GaussianCloud& cloud, const ClassHead& head,
                                               std::uint64_t iteration);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
/// Written to a temporary file in the same directory and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const GaussianCloud& cloud, const ClassHead& head,
                     std::uint64_t iteration);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Atomic text/binary file write.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

/// Converts COLMAP text output (cameras.txt, images.txt; PINHOLE or
/// SIMPLE_PINHOLE) into a manifest. Mask and depth paths are derived from
/// each image name; views alternate train/holdout in image-id order.
Manifest manifest_from_colmap(const std::filesystem::path& sparse_dir, int instance_count);

}  // namespace tsgs
