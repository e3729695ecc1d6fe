#include "tsgs/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <limits>
#include <fstream>
#include <map>
#include <sstream>

#include "tsgs/adaptive_control.hpp"
#include "tsgs/error.hpp"
#include "tsgs/parallel.hpp"

namespace fs = std::filesystem;

namespace tsgs {

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < views.size(); ++i)
    if (views[i].split == split) out.push_back(i);
  return out;
}

std::vector<Camera> Dataset::cameras() const {
  std::vector<Camera> out;
  for (const auto& v : views) out.push_back(v.camera);
  return out;
}

// ---------------------------------------------------------------- files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw io_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw io_error("cannot move " + tmp.string() + " to " + path.string());
  }
}

// ---------------------------------------------------------------- manifest

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string& value, std::size_t expected, const std::string& what) {
  std::istringstream ss(value);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v)) throw corruption_error(what + ": not a number: '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != expected)
    throw corruption_error(what + ": expected " + std::to_string(expected) + " numbers, got " +
                           std::to_string(out.size()));
  return out;
}

int parse_int(const std::string& value, const std::string& what) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw corruption_error(what + ": not an integer: '" + value + "'");
  return static_cast<int>(v);
}

Camera camera_from_numbers(const std::vector<double>& n, const std::string& what) {
  Camera c;
  c.fx = n[0];
  c.fy = n[1];
  c.cx = n[2];
  c.cy = n[3];
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) c.rotation(r, k) = n[static_cast<std::size_t>(4 + 3 * r + k)];
  c.translation = Vec3(n[13], n[14], n[15]);
  if (n[16] != std::floor(n[16]) || n[17] != std::floor(n[17]) || n[16] < 1 || n[17] < 1 || n[16] > 1e6 || n[17] > 1e6)
    throw corruption_error(what + ": width and height must be positive integers");
  c.width = static_cast<int>(n[16]);
  c.height = static_cast<int>(n[17]);
  return c;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_count = false;
  ManifestView* current = nullptr;
  std::map<std::string, int> seen;  // keys of the current section
  auto finish_view = [&]() {
    if (!current) return;
    for (const char* k : {"name", "image", "mask", "depth", "camera", "split"})
      if (!seen.count(k))
        throw corruption_error("manifest: view " + std::to_string(m.views.size()) + " is missing '" + k + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "manifest line " + std::to_string(line_no);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s == "[view]") {
      finish_view();
      m.views.emplace_back();
      current = &m.views.back();
      seen.clear();
      continue;
    }
    if (s.front() == '[') throw corruption_error(where + ": unknown section " + s);
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw corruption_error(where + ": expected key = value");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    if (seen.count(key)) throw corruption_error(where + ": duplicate key '" + key + "'");
    seen[key] = line_no;
    if (!current) {
      if (key == "format") {
        if (value != "tsgs-dataset") throw corruption_error(where + ": unsupported format '" + value + "'");
      } else if (key == "version") {
        if (parse_int(value, where) != 1) throw corruption_error(where + ": unsupported version");
      } else if (key == "instance_count") {
        m.instance_count = parse_int(value, where);
        if (m.instance_count < 0 || m.instance_count > 255)
          throw corruption_error(where + ": instance_count must lie in [0, 255]");
        have_count = true;
      } else if (key == "bounds") {
        const auto n = parse_numbers(value, 6, where);
        Box3 b{Vec3(n[0], n[1], n[2]), Vec3(n[3], n[4], n[5])};
        if (!((b.hi - b.lo).array() > 0).all()) throw corruption_error(where + ": degenerate bounds");
        m.bounds = b;
      } else {
        throw corruption_error(where + ": unknown key '" + key + "'");
      }
      continue;
    }
    if (key == "name") current->name = value;
    else if (key == "image") current->image = value;
    else if (key == "mask") current->mask = value;
    else if (key == "depth") current->depth = value;
    else if (key == "camera") current->camera = camera_from_numbers(parse_numbers(value, 18, where), where);
    else if (key == "split") {
      if (value == "train") current->split = Split::train;
      else if (value == "holdout") current->split = Split::holdout;
      else throw corruption_error(where + ": split must be train or holdout");
    } else {
      throw corruption_error(where + ": unknown key '" + key + "'");
    }
  }
  finish_view();
  if (!have_count) throw corruption_error("manifest: missing instance_count");
  std::map<std::string, int> names;
  for (const auto& v : m.views)
    if (names[v.name]++) throw corruption_error("manifest: duplicate view name '" + v.name + "'");
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::ostringstream out;
  out << "format = tsgs-dataset\nversion = 1\ninstance_count = " << m.instance_count << "\n";
  if (m.bounds) {
    out << "bounds =";
    for (int a = 0; a < 3; ++a) out << ' ' << format_double(m.bounds->lo[a]);
    for (int a = 0; a < 3; ++a) out << ' ' << format_double(m.bounds->hi[a]);
    out << "\n";
  }
  for (const auto& v : m.views) {
    const Camera& c = v.camera;
    out << "\n[view]\nname = " << v.name << "\nimage = " << v.image << "\nmask = " << v.mask << "\ndepth = " << v.depth
        << "\ncamera = " << format_double(c.fx) << ' ' << format_double(c.fy) << ' ' << format_double(c.cx) << ' '
        << format_double(c.cy);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out << ' ' << format_double(c.rotation(r, k));
    for (int a = 0; a < 3; ++a) out << ' ' << format_double(c.translation[a]);
    out << ' ' << c.width << ' ' << c.height << "\nsplit = " << (v.split == Split::train ? "train" : "holdout") << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------- PNG

Png8 read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw load_error("cannot decode PNG " + path.string() + ": " + img.message);
  const bool color = img.format & PNG_FORMAT_FLAG_COLOR;
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw load_error("unsupported 16-bit PNG " + path.string());
  }
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Png8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = color ? 3 : 1;
  out.data.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw load_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const fs::path& path, const Png8& image) {
  if (image.channels != 1 && image.channels != 3) throw parameter_error("write_png: 1 or 3 channels required");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.data.data(), 0, nullptr))
    throw io_error("cannot encode PNG " + path.string() + ": " + img.message);
  std::string buffer(size, '\0');
  if (!png_image_write_to_memory(&img, buffer.data(), &size, 0, image.data.data(), 0, nullptr))
    throw io_error("cannot encode PNG " + path.string() + ": " + img.message);
  buffer.resize(size);
  write_file_atomic(path, buffer);
}

double srgb_to_linear(double v) { return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4); }

double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

Png8 encode_srgb(const ImageD& linear) {
  Png8 out;
  out.width = linear.width;
  out.height = linear.height;
  out.channels = linear.channels;
  out.data.resize(linear.data.size());
  for (std::size_t i = 0; i < linear.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * linear_to_srgb(linear.data[i])));
  return out;
}

ImageD decode_srgb(const Png8& png) {
  ImageD out(png.width, png.height, png.channels);
  for (std::size_t i = 0; i < png.data.size(); ++i) out.data[i] = srgb_to_linear(png.data[i] / 255.0);
  return out;
}

// ---------------------------------------------------------------- PFM

ImageD read_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  const std::string what = "PFM " + path.string();
  const std::string magic = token();
  if (magic == "PF") throw corruption_error(what + ": three-channel PFM is not a depth map");
  if (magic != "Pf") throw corruption_error(what + ": bad magic");
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw corruption_error(what + ": malformed header");
  }
  if (w <= 0 || h <= 0 || scale == 0 || !std::isfinite(scale)) throw corruption_error(what + ": malformed header");
  ++pos;  // single whitespace byte before the raster
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < pos || bytes.size() - pos != 4 * count) throw corruption_error(what + ": raster size mismatch");
  const bool little = scale < 0;
  ImageD out(w, h, 1);
  for (int row = 0; row < h; ++row) {
    for (int x = 0; x < w; ++x) {
      const std::size_t k = pos + 4 * (static_cast<std::size_t>(row) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x));
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        const auto byte = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[k + static_cast<std::size_t>(b)]));
        u |= little ? byte << (8 * b) : byte << (8 * (3 - b));
      }
      out.at(x, h - 1 - row) = static_cast<double>(std::bit_cast<float>(u));
    }
  }
  return out;
}

void write_pfm(const fs::path& path, const ImageD& depth) {
  if (depth.channels != 1) throw parameter_error("write_pfm: single-channel image required");
  std::string bytes = "Pf\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n-1.0\n";
  bytes.reserve(bytes.size() + 4 * depth.data.size());
  for (int row = depth.height - 1; row >= 0; --row)
    for (int x = 0; x < depth.width; ++x) {
      const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(depth.at(x, row)));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
    }
  write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------- dataset

Dataset load_dataset(const fs::path& manifest_path, int dilation_px) {
  const fs::path file = fs::is_directory(manifest_path) ? manifest_path / kManifestName : manifest_path;
  if (!fs::exists(file)) throw load_error("manifest not found: " + file.string());
  Manifest m;
  try {
    m = parse_manifest(read_file(file));
  } catch (const Error& e) {
    throw load_error(file.string() + ": " + e.what());
  }
  if (m.views.empty()) throw load_error(file.string() + ": dataset has no views");

  Dataset ds;
  ds.root = file.parent_path();
  ds.instance_count = m.instance_count;
  ds.bounds = m.bounds;
  ds.views.resize(m.views.size());
  std::vector<std::vector<std::string>> problems(m.views.size());

  parallel_for(m.views.size(), [&](std::size_t i) {
    const ManifestView& mv = m.views[i];
    DatasetView& dv = ds.views[i];
    auto& errs = problems[i];
    dv.name = mv.name;
    dv.camera = mv.camera;
    dv.split = mv.split;
    for (const auto& v : validate_camera(mv.camera)) errs.push_back("camera: " + v.message);
    const int w = mv.camera.width, h = mv.camera.height;
    auto check_size = [&](int iw, int ih, const std::string& f) {
      if (iw != w || ih != h) {
        errs.push_back(f + " is " + std::to_string(iw) + "x" + std::to_string(ih) + ", camera expects " +
                       std::to_string(w) + "x" + std::to_string(h));
        return false;
      }
      return true;
    };
    auto attempt = [&](const std::string& rel, auto&& fn) {
      const fs::path p = ds.root / rel;
      if (!fs::exists(p)) {
        errs.push_back("missing file " + p.string());
        return;
      }
      try {
        fn(p);
      } catch (const Error& e) {
        errs.push_back(e.what());
      }
    };
    attempt(mv.image, [&](const fs::path& p) {
      const Png8 png = read_png(p);
      if (png.channels != 3) {
        errs.push_back(p.string() + " is not an RGB image");
        return;
      }
      if (check_size(png.width, png.height, p.string())) dv.bundle.image = decode_srgb(png);
    });
    attempt(mv.mask, [&](const fs::path& p) {
      const Png8 png = read_png(p);
      if (png.channels != 1) {
        errs.push_back(p.string() + " is not a single-channel mask");
        return;
      }
      if (!check_size(png.width, png.height, p.string())) return;
      LabelImage ids(png.width, png.height, 1);
      int worst = 0;
      for (std::size_t k = 0; k < png.data.size(); ++k) {
        ids.data[k] = png.data[k];
        worst = std::max(worst, static_cast<int>(png.data[k]));
      }
      if (worst > m.instance_count) {
        errs.push_back(p.string() + " contains ID " + std::to_string(worst) + " above instance_count " +
                       std::to_string(m.instance_count));
        return;
      }
      dv.bundle.id_mask = std::move(ids);
    });
    attempt(mv.depth, [&](const fs::path& p) {
      ImageD d = read_pfm(p);
      if (check_size(d.width, d.height, p.string())) dv.bundle.prior_depth = std::move(d);
    });
    if (!dv.bundle.id_mask.empty()) {
      dv.bundle.floating_mask = build_floating_mask(dv.bundle.id_mask, dilation_px);
      if (!dv.bundle.prior_depth.empty()) {
        for (std::size_t k = 0; k < dv.bundle.prior_depth.data.size(); ++k) {
          const double z = dv.bundle.prior_depth.data[k];
          if (dv.bundle.floating_mask.data[k] && !(std::isfinite(z) && z > 0)) {
            errs.push_back((ds.root / mv.depth).string() + ": non-positive depth under the floating mask at pixel (" +
                           std::to_string(k % static_cast<std::size_t>(w)) + ", " +
                           std::to_string(k / static_cast<std::size_t>(w)) + ")");
            break;
          }
        }
      }
    }
  });

  std::string report;
  for (std::size_t i = 0; i < problems.size(); ++i)
    for (const auto& e : problems[i]) report += "\n  view '" + m.views[i].name + "': " + e;
  if (!report.empty()) throw load_error("dataset " + file.string() + " failed validation:" + report);
  return ds;
}

// ---------------------------------------------------------------- checkpoints

namespace {

struct Writer {
  std::vector<std::uint8_t> bytes;
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
};

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw corruption_error("checkpoint: truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * b);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
};

constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4;
constexpr std::size_t kFixedFloats = 3 + 3 + 4 + 1 + kIdDim;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const GaussianCloud& cloud, const ClassHead& head,
                                               std::uint64_t iteration) {
  if (head.weight.rows() != kIdDim || head.weight.cols() != head.bias.size())
    throw parameter_error("serialize_checkpoint: malformed class head");
  const int c = head.instance_count();
  Writer w;
  for (char ch : {'T', 'S', 'G', 'S'}) w.bytes.push_back(static_cast<std::uint8_t>(ch));
  w.u32(kCheckpointVersion);
  w.u64(cloud.size());
  w.u32(static_cast<std::uint32_t>(c));
  for (const auto& v : cloud.centers)
    for (int a = 0; a < 3; ++a) w.f32(v[a]);
  for (const auto& v : cloud.log_scales)
    for (int a = 0; a < 3; ++a) w.f32(v[a]);
  for (const auto& v : cloud.rotations)
    for (int a = 0; a < 4; ++a) w.f32(v[a]);
  for (double v : cloud.opacity_logits) w.f32(v);
  for (double v : cloud.colors) w.f32(v);
  for (const auto& v : cloud.identity_codes)
    for (int d = 0; d < kIdDim; ++d) w.f32(v[d]);
  for (int r = 0; r < kIdDim; ++r)
    for (int k = 0; k <= c; ++k) w.f32(head.weight(r, k));
  for (int k = 0; k <= c; ++k) w.f32(head.bias[k]);
  w.u64(iteration);
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), "TSGS", 4) != 0) throw corruption_error("checkpoint: bad magic");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw corruption_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint32_t c = r.u32();
  if (c > 255) throw corruption_error("checkpoint: implausible instance count " + std::to_string(c));
  const std::size_t head_floats = static_cast<std::size_t>(kIdDim + 1) * (c + 1);
  const std::size_t minimum = kHeaderBytes + 4 * head_floats + 8;
  if (bytes.size() < minimum) throw corruption_error("checkpoint: truncated");
  const std::size_t per_all = (bytes.size() - minimum);
  if (per_all % 4 != 0) throw corruption_error("checkpoint: length is not a whole number of floats");
  const std::size_t gaussian_floats = per_all / 4;
  int degree = -1;
  if (n == 0) {
    if (gaussian_floats != 0) throw corruption_error("checkpoint: trailing data after an empty cloud");
    degree = 0;
  } else {
    if (n > gaussian_floats || gaussian_floats % n != 0)
      throw corruption_error("checkpoint: length does not match the Gaussian count");
    const std::size_t per = gaussian_floats / n;
    for (int d = 0; d <= kMaxShDegree; ++d)
      if (per == kFixedFloats + 3 * static_cast<std::size_t>(sh_coeff_count(d))) degree = d;
    if (degree < 0) throw corruption_error("checkpoint: length does not match any color layout");
  }

  Checkpoint ck;
  ck.cloud.sh_degree = degree;
  ck.cloud.resize(static_cast<std::size_t>(n));
  for (auto& v : ck.cloud.centers)
    for (int a = 0; a < 3; ++a) v[a] = r.f32();
  for (auto& v : ck.cloud.log_scales)
    for (int a = 0; a < 3; ++a) v[a] = r.f32();
  for (auto& v : ck.cloud.rotations)
    for (int a = 0; a < 4; ++a) v[a] = r.f32();
  for (double& v : ck.cloud.opacity_logits) v = r.f32();
  for (double& v : ck.cloud.colors) v = r.f32();
  for (auto& v : ck.cloud.identity_codes)
    for (int d = 0; d < kIdDim; ++d) v[d] = r.f32();
  ck.head = ClassHead(static_cast<int>(c));
  for (int row = 0; row < kIdDim; ++row)
    for (std::uint32_t k = 0; k <= c; ++k) ck.head.weight(row, k) = r.f32();
  for (std::uint32_t k = 0; k <= c; ++k) ck.head.bias[k] = r.f32();
  ck.iteration = r.u64();
  if (r.pos != bytes.size()) throw corruption_error("checkpoint: trailing bytes");
  for (double v : ck.cloud.colors)
    if (!std::isfinite(v)) throw corruption_error("checkpoint: non-finite color coefficient");
  for (std::size_t i = 0; i < ck.cloud.size(); ++i)
    if (!ck.cloud.centers[i].allFinite() || !ck.cloud.log_scales[i].allFinite() || !ck.cloud.rotations[i].allFinite() ||
        !std::isfinite(ck.cloud.opacity_logits[i]) || !ck.cloud.identity_codes[i].allFinite())
      throw corruption_error("checkpoint: non-finite parameter for Gaussian " + std::to_string(i));
  return ck;
}

void save_checkpoint(const fs::path& path, const GaussianCloud& cloud, const ClassHead& head, std::uint64_t iteration) {
  const auto bytes = serialize_checkpoint(cloud, head, iteration);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string s = read_file(path);
  return deserialize_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
}

// ---------------------------------------------------------------- COLMAP

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw corruption_error(what + ": not a number: '" + s + "'");
  return v;
}

}  // namespace

Manifest manifest_from_colmap(const fs::path& sparse_dir, int instance_count) {
  struct Intrinsics {
    double fx, fy, cx, cy;
    int width, height;
  };
  std::map<long, Intrinsics> cams;
  {
    std::istringstream in(read_file(sparse_dir / "cameras.txt"));
    std::string line;
    while (std::getline(in, line)) {
      const std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      const auto t = split_ws(s);
      const std::string what = "cameras.txt";
      if (t.size() < 5) throw corruption_error(what + ": short camera line");
      const long id = std::lround(to_double(t[0], what));
      Intrinsics k{};
      k.width = static_cast<int>(to_double(t[2], what));
      k.height = static_cast<int>(to_double(t[3], what));
      if (t[1] == "PINHOLE" && t.size() == 8) {
        k.fx = to_double(t[4], what);
        k.fy = to_double(t[5], what);
        k.cx = to_double(t[6], what);
        k.cy = to_double(t[7], what);
      } else if (t[1] == "SIMPLE_PINHOLE" && t.size() == 7) {
        k.fx = k.fy = to_double(t[4], what);
        k.cx = to_double(t[5], what);
        k.cy = to_double(t[6], what);
      } else {
        throw corruption_error(what + ": unsupported camera model '" + t[1] + "' (PINHOLE or SIMPLE_PINHOLE)");
      }
      cams[id] = k;
    }
  }

  struct Entry {
    long id;
    ManifestView view;
  };
  std::vector<Entry> entries;
  {
    std::istringstream in(read_file(sparse_dir / "images.txt"));
    std::string line;
    bool expect_points = false;
    while (std::getline(in, line)) {
      const std::string s = trim(line);
      if (!s.empty() && s[0] == '#') continue;
      if (expect_points) {
        expect_points = false;
        continue;
      }
      if (s.empty()) continue;
      const auto t = split_ws(s);
      const std::string what = "images.txt";
      if (t.size() != 10) throw corruption_error(what + ": expected 10 fields in image line");
      Vec4 q(to_double(t[1], what), to_double(t[2], what), to_double(t[3], what), to_double(t[4], what));
      if (!(q.norm() > 0)) throw corruption_error(what + ": zero quaternion");
      const long cam_id = std::lround(to_double(t[8], what));
      const auto it = cams.find(cam_id);
      if (it == cams.end()) throw corruption_error(what + ": unknown camera id " + t[8]);
      ManifestView v;
      const std::string stem = fs::path(t[9]).stem().string();
      v.name = stem;
      v.image = "images/" + t[9];
      v.mask = "masks/" + stem + ".png";
      v.depth = "depths/" + stem + ".pfm";
      v.camera.fx = it->second.fx;
      v.camera.fy = it->second.fy;
      v.camera.cx = it->second.cx;
      v.camera.cy = it->second.cy;
      v.camera.width = it->second.width;
      v.camera.height = it->second.height;
      v.camera.rotation = rotation_from_quaternion(q.normalized());
      v.camera.translation = Vec3(to_double(t[5], what), to_double(t[6], what), to_double(t[7], what));
      entries.push_back({std::lround(to_double(t[0], what)), v});
      expect_points = true;
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
  Manifest m;
  m.instance_count = instance_count;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].view.split = i % 2 == 0 ? Split::train : Split::holdout;
    m.views.push_back(entries[i].view);
  }
  return m;
}

}  // namespace tsgs
