#include "oxymap/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace oxymap::io {

static_assert(std::endian::native == std::endian::little,
              "raster and container formats assume a little-endian host");

namespace {

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  return out;
}

json read_sidecar(const std::filesystem::path& raster) {
  const auto bytes = read_all(sidecar_path(raster));
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(Errc::format, "bad sidecar for " + raster.string() + ": " + e.what());
  }
}

struct Geometry {
  std::size_t width, height, channels;
  double pitch;
  std::string dtype;
};

Geometry geometry(const json& sc, const std::filesystem::path& path) {
  try {
    return {sc.at("width").get<std::size_t>(), sc.at("height").get<std::size_t>(),
            sc.value("channels", std::size_t{1}), sc.value("pitch_mm", 1.0),
            sc.value("dtype", std::string("float32"))};
  } catch (const json::exception& e) {
    throw Error(Errc::format, "sidecar for " + path.string() + " lacks geometry: " + e.what());
  }
}

}  // namespace

std::optional<double> Raster::number(const std::string& key) const {
  if (sidecar.contains(key) && sidecar[key].is_number()) return sidecar[key].get<double>();
  return std::nullopt;
}

std::filesystem::path sidecar_path(const std::filesystem::path& raster) {
  return std::filesystem::path(raster.string() + ".json");
}

void write_raster(const std::filesystem::path& path, const std::vector<ImagePlane>& channels,
                  const std::string& semantic, const json& extra) {
  if (channels.empty()) throw Error(Errc::invalid_argument, "raster needs at least one channel");
  const ImagePlane& first = channels.front();
  for (const auto& ch : channels)
    if (!ch.same_shape(first)) throw Error(Errc::dimension_mismatch, "raster channels differ in size");

  std::vector<float> samples;
  samples.reserve(first.size() * channels.size());
  for (const auto& ch : channels)
    for (double v : ch.values()) samples.push_back(static_cast<float>(v));
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size() * sizeof(float)));

  json sc = extra;
  sc["width"] = first.width();
  sc["height"] = first.height();
  sc["channels"] = channels.size();
  sc["pitch_mm"] = first.pitch_mm();
  sc["semantic"] = semantic;
  sc["dtype"] = "float32";
  open_out(sidecar_path(path)) << sc.dump(2) << '\n';
}

void write_plane(const std::filesystem::path& path, const ImagePlane& plane,
                 const std::string& semantic, const json& extra) {
  write_raster(path, {plane}, semantic, extra);
}

Raster read_raster(const std::filesystem::path& path) {
  Raster r;
  r.sidecar = read_sidecar(path);
  const Geometry g = geometry(r.sidecar, path);
  const auto bytes = read_all(path);
  const std::size_t n = g.width * g.height;
  if (g.dtype == "float32") {
    if (bytes.size() != n * g.channels * sizeof(float))
      throw Error(Errc::format, path.string() + ": size does not match sidecar geometry");
    for (std::size_t c = 0; c < g.channels; ++c) {
      std::vector<double> data(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + (c * n + i) * sizeof(float), sizeof(float));
        data[i] = static_cast<double>(f);
      }
      r.channels.emplace_back(g.width, g.height, g.pitch, std::move(data));
    }
  } else if (g.dtype == "uint8") {
    if (bytes.size() != n * g.channels)
      throw Error(Errc::format, path.string() + ": size does not match sidecar geometry");
    for (std::size_t c = 0; c < g.channels; ++c) {
      std::vector<double> data(n);
      for (std::size_t i = 0; i < n; ++i)
        data[i] = static_cast<double>(static_cast<unsigned char>(bytes[c * n + i]));
      r.channels.emplace_back(g.width, g.height, g.pitch, std::move(data));
    }
  } else {
    throw Error(Errc::format, path.string() + ": unsupported dtype " + g.dtype);
  }
  return r;
}

ImagePlane read_plane(const std::filesystem::path& path, std::size_t channel) {
  Raster r = read_raster(path);
  if (channel >= r.channels.size())
    throw Error(Errc::missing_channel, path.string() + ": no channel " + std::to_string(channel));
  return std::move(r.channels[channel]);
}

void write_mask(const std::filesystem::path& path, const Mask& mask, double pitch_mm) {
  auto out = open_out(path);
  const auto bits = mask.bits();
  out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  json sc{{"width", mask.width()}, {"height", mask.height()}, {"channels", 1},
          {"pitch_mm", pitch_mm}, {"semantic", "mask"}, {"dtype", "uint8"}};
  open_out(sidecar_path(path)) << sc.dump(2) << '\n';
}

Mask read_mask(const std::filesystem::path& path) {
  const ImagePlane p = read_plane(path);
  Mask m(p.width(), p.height(), false);
  for (std::size_t i = 0; i < p.size(); ++i) m.set(i, is_valid(p[i]) && p[i] != 0.0);
  return m;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  if (c.magic.size() != 4) throw Error(Errc::invalid_argument, "container magic must be 4 bytes");
  const std::string head = c.header.dump();
  const std::uint32_t version = c.version;
  const std::uint64_t len = head.size();
  auto out = open_out(path);
  out.write(c.magic.data(), 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(c.blob.data()),
            static_cast<std::streamsize>(c.blob.size() * sizeof(float)));
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  const auto bytes = read_all(path);
  constexpr std::size_t prefix = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < prefix) throw Error(Errc::format, path.string() + ": truncated container");
  Container c;
  c.magic.assign(bytes.data(), 4);
  if (c.magic != expected_magic)
    throw Error(Errc::format, path.string() + ": expected " + expected_magic + " container, found '" +
                                  c.magic + "'");
  std::uint64_t len = 0;
  std::memcpy(&c.version, bytes.data() + 4, sizeof c.version);
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (bytes.size() < prefix + len || (bytes.size() - prefix - len) % sizeof(float) != 0)
    throw Error(Errc::format, path.string() + ": inconsistent header length");
  try {
    c.header = json::parse(bytes.begin() + prefix, bytes.begin() + static_cast<long>(prefix + len));
  } catch (const json::exception& e) {
    throw Error(Errc::format, path.string() + ": bad header JSON: " + e.what());
  }
  c.blob.resize((bytes.size() - prefix - len) / sizeof(float));
  std::memcpy(c.blob.data(), bytes.data() + prefix + len, c.blob.size() * sizeof(float));
  return c;
}

std::uint64_t append_blob(std::vector<float>& blob, std::span<const double> values) {
  const std::uint64_t offset = blob.size() * sizeof(float);
  for (double v : values) blob.push_back(static_cast<float>(v));
  return offset;
}

std::vector<double> slice_blob(const std::vector<float>& blob, std::uint64_t byte_offset,
                               std::size_t count) {
  if (byte_offset % sizeof(float) != 0)
    throw Error(Errc::format, "blob offset not aligned to float32");
  const std::size_t first = byte_offset / sizeof(float);
  if (first + count > blob.size()) throw Error(Errc::format, "blob slice out of range");
  return {blob.begin() + static_cast<long>(first), blob.begin() + static_cast<long>(first + count)};
}

}  // namespace oxymap::io
