#include "oxymap/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "oxymap/io.hpp"
#include "oxymap/parallel.hpp"

namespace oxymap {

using nlohmann::json;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void Roi::check_inside(std::size_t image_width, std::size_t image_height) const {
  if (height == 0 || width == 0) throw Error(Errc::invalid_argument, "ROI is empty");
  if (row + height > image_height || col + width > image_width)
    throw Error(Errc::invalid_argument, "ROI (" + std::to_string(row) + "," + std::to_string(col) + "," +
                                            std::to_string(height) + "," + std::to_string(width) +
                                            ") lies outside the " + std::to_string(image_width) + "x" +
                                            std::to_string(image_height) + " image");
}

Mask Roi::mask(std::size_t image_width, std::size_t image_height) const {
  check_inside(image_width, image_height);
  Mask m(image_width, image_height, false);
  for (std::size_t r = row; r < row + height; ++r)
    for (std::size_t c = col; c < col + width; ++c) m.set(r, c, true);
  return m;
}

Roi Roi::parse(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long x = std::stol(item, &used);
      if (used != item.size() || x < 0) throw std::invalid_argument(item);
      v.push_back(static_cast<std::size_t>(x));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "bad ROI component '" + item + "'");
    }
  }
  if (v.size() != 4) throw Error(Errc::invalid_argument, "ROI must be row,col,height,width");
  return {v[0], v[1], v[2], v[3]};
}

std::vector<Frame> read_frame_manifest(const std::filesystem::path& path) {
  std::vector<Frame> frames;
  const auto base = path.parent_path();
  for (const auto& j : read_jsonl(path)) {
    try {
      Frame f;
      f.t_seconds = j.at("t_seconds").get<double>();
      f.wavelength_nm = j.at("wavelength_nm").get<double>();
      f.path = j.at("path").get<std::string>();
      if (f.path.is_relative()) f.path = base / f.path;
      frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw Error(Errc::manifest, path.string() + ": frame entry needs t_seconds, wavelength_nm, path (" +
                                      e.what() + ")");
    }
  }
  return frames;
}

Pairing pair_frames(const std::vector<Frame>& frames, double first_nm, double second_nm, double tolerance_nm) {
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (!(frames[i].t_seconds > frames[i - 1].t_seconds))
      throw Error(Errc::manifest, "frames are not strictly time-ordered at index " + std::to_string(i));
  auto is = [&](const Frame& f, double wl) { return std::abs(f.wavelength_nm - wl) <= tolerance_nm; };
  Pairing out;
  std::size_t i = 0;
  while (i < frames.size()) {
    if (i + 1 < frames.size()) {
      const Frame& a = frames[i];
      const Frame& b = frames[i + 1];
      if (is(a, first_nm) && is(b, second_nm)) {
        out.pairs.push_back({b.t_seconds, a, b});
        i += 2;
        continue;
      }
      if (is(a, second_nm) && is(b, first_nm)) {
        out.pairs.push_back({b.t_seconds, b, a});
        i += 2;
        continue;
      }
    }
    out.dropped.push_back(frames[i]);
    out.warnings.push_back("unpaired frame at t = " + fmt("%g", frames[i].t_seconds) + " s (" +
                           fmt("%g", frames[i].wavelength_nm) + " nm) dropped");
    ++i;
  }
  return out;
}

std::vector<TimePoint> roi_timeseries(const std::vector<FramePair>& pairs, const Roi& roi,
                                      const PairEstimator& estimator, unsigned threads) {
  std::vector<TimePoint> series(pairs.size());
  parallel_for(0, pairs.size(), threads, [&](std::size_t k) {
    const FramePair& p = pairs[k];
    const StO2Map map = estimator(io::read_plane(p.first.path), io::read_plane(p.second.path));
    const PlaneStats s = masked_stats(map.plane(), roi.mask(map.width(), map.height()));
    if (s.count == 0) throw Error(Errc::empty_mask, "no valid StO2 inside the ROI at t = " + fmt("%g", p.t_seconds));
    series[k] = {p.t_seconds, s.mean, s.stddev, s.count};
  });
  std::stable_sort(series.begin(), series.end(),
                   [](const TimePoint& a, const TimePoint& b) { return a.t_seconds < b.t_seconds; });
  return series;
}

std::vector<Checkpoint> read_checkpoints(const std::filesystem::path& path) {
  std::vector<Checkpoint> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back({j.at("t_seconds").get<double>(), j.at("sto2").get<double>()});
    } catch (const json::exception& e) {
      throw Error(Errc::manifest, path.string() + ": checkpoint needs t_seconds and sto2 (" + e.what() + ")");
    }
  }
  return out;
}

std::string timeseries_csv(const std::vector<TimePoint>& series, const std::string& method) {
  std::string out = "t,mean_sto2,std_sto2,method\n";
  for (const auto& p : series)
    out += fmt("%.17g", p.t_seconds) + "," + fmt("%.17g", p.mean_sto2) + "," + fmt("%.17g", p.std_sto2) + "," +
           method + "\n";
  return out;
}

std::string timeseries_svg(const std::vector<TimePoint>& series, const std::vector<Checkpoint>& checkpoints,
                           const std::string& method) {
  const double w = 640, h = 360, left = 60, right = 20, top = 20, bottom = 50;
  double t0 = 0.0, t1 = 1.0;
  bool any = false;
  auto extend = [&](double t) {
    if (!any) t0 = t1 = t;
    t0 = std::min(t0, t);
    t1 = std::max(t1, t);
    any = true;
  };
  for (const auto& p : series) extend(p.t_seconds);
  for (const auto& c : checkpoints) extend(c.t_seconds);
  if (t1 <= t0) t1 = t0 + 1.0;
  auto sx = [&](double t) { return left + (t - t0) / (t1 - t0) * (w - left - right); };
  auto sy = [&](double s) { return top + (1.0 - std::clamp(s, 0.0, 1.0)) * (h - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << " " << h << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double s = k / 4.0;
    o << "<text x=\"" << left - 8 << "\" y=\"" << sy(s) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
      << fmt("%.2f", s) << "</text>\n";
  }
  o << "<text x=\"" << left << "\" y=\"" << h - bottom + 18 << "\" font-size=\"11\">" << fmt("%g", t0)
    << "</text>\n";
  o << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 18 << "\" font-size=\"11\" text-anchor=\"end\">"
    << fmt("%g", t1) << "</text>\n";
  o << "<text x=\"" << (w + left) / 2 << "\" y=\"" << h - 10 << "\" font-size=\"12\" text-anchor=\"middle\">t (s)</text>\n";
  o << "<text x=\"14\" y=\"" << (h - bottom + top) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
    << (h - bottom + top) / 2 << ")\" text-anchor=\"middle\">StO2</text>\n";
  if (!series.empty()) {
    o << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (const auto& p : series) o << fmt("%.2f", sx(p.t_seconds)) << "," << fmt("%.2f", sy(p.mean_sto2)) << " ";
    o << "\"/>\n";
  }
  for (const auto& c : checkpoints)
    o << "<circle cx=\"" << fmt("%.2f", sx(c.t_seconds)) << "\" cy=\"" << fmt("%.2f", sy(c.sto2))
      << "\" r=\"5\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  o << "<text x=\"" << w - right << "\" y=\"" << top + 12 << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#1f77b4\">"
    << method << "</text>\n";
  if (!checkpoints.empty())
    o << "<text x=\"" << w - right << "\" y=\"" << top + 28
      << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#d62728\">sfdi</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace oxymap
