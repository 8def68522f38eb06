#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oxymap/core.hpp"

namespace oxymap::io {

using json = nlohmann::json;

// Raster files: raw little-endian samples (float32, or uint8 for masks),
// channel-major then row-major, next to a JSON sidecar at "<path>.json"
// holding {width, height, channels, pitch_mm, semantic, dtype} plus any
// extra keys the writer attaches (wavelength_nm, fx_mm, ...).

struct Raster {
  json sidecar;
  std::vector<ImagePlane> channels;

  std::optional<double> number(const std::string& key) const;
};

std::filesystem::path sidecar_path(const std::filesystem::path& raster);

void write_raster(const std::filesystem::path& path, const std::vector<ImagePlane>& channels,
                  const std::string& semantic, const json& extra = json::object());
void write_plane(const std::filesystem::path& path, const ImagePlane& plane,
                 const std::string& semantic, const json& extra = json::object());
Raster read_raster(const std::filesystem::path& path);
/// Reads a single-channel raster (or channel `channel` of a multi-channel one).
ImagePlane read_plane(const std::filesystem::path& path, std::size_t channel = 0);

void write_mask(const std::filesystem::path& path, const Mask& mask, double pitch_mm = 1.0);
/// Accepts uint8 masks and float32 rasters (nonzero and valid = true).
Mask read_mask(const std::filesystem::path& path);

// Binary container shared by the LUT, reference-bundle and weight files:
//   4-byte magic | u32 version | u64 header length | JSON header | float32 blob
// Blob offsets recorded in the header are byte offsets from the blob start.

struct Container {
  std::string magic;
  std::uint32_t version = 1;
  json header;
  std::vector<float> blob;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path, const std::string& expected_magic);

/// Appends doubles to the blob as float32 and returns their byte offset.
std::uint64_t append_blob(std::vector<float>& blob, std::span<const double> values);
std::vector<double> slice_blob(const std::vector<float>& blob, std::uint64_t byte_offset,
                               std::size_t count);

}  // namespace oxymap::io
