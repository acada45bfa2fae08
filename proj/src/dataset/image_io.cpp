#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mal/dataset.hpp"

namespace fs = std::filesystem;

namespace mal {
namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<std::uint8_t> interleave(const Image& x) {
  std::vector<std::uint8_t> buf(x.plane_size() * 3);
  for (int y = 0; y < x.height; ++y) {
    for (int col = 0; col < x.width; ++col) {
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * x.width + col) * 3 + c] = to_byte(x.at(c, y, col));
    }
  }
  return buf;
}

Image deinterleave(const std::vector<std::uint8_t>& buf, int h, int w) {
  Image x(h, w);
  for (int y = 0; y < h; ++y) {
    for (int col = 0; col < w; ++col) {
      for (int c = 0; c < 3; ++c) x.at(c, y, col) = buf[(static_cast<std::size_t>(y) * w + col) * 3 + c] / 255.0;
    }
  }
  return x;
}

bool is_ppm(const fs::path& path) {
  std::string ext = path.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".ppm";
}

void save_png(const Image& x, const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(x.width);
  img.height = static_cast<png_uint_32>(x.height);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf = interleave(x);
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError("cannot write " + path.string() + ": " + msg);
  }
}

Image load_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError("cannot decode " + path.string() + ": " + msg);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError("cannot decode " + path.string() + ": " + msg);
  }
  return deinterleave(buf, static_cast<int>(img.height), static_cast<int>(img.width));
}

void save_ppm(const Image& x, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out << "P6\n" << x.width << " " << x.height << "\n255\n";
  std::vector<std::uint8_t> buf = interleave(x);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ImageIoError("cannot write " + path.string());
}

Image load_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || w < 1 || h < 1 || maxval != 255) {
    throw ImageIoError("cannot decode " + path.string() + ": bad PPM header");
  }
  in.get();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw ImageIoError("cannot decode " + path.string() + ": truncated pixel data");
  }
  return deinterleave(buf, h, w);
}

}  // namespace

Image quantize8(const Image& x) {
  Image out = x;
  for (double& v : out.pixels) v = to_byte(v) / 255.0;
  return out;
}

void save_image(const Image& x, const fs::path& path) {
  if (x.height < 1 || x.width < 1) throw ImageIoError("cannot write " + path.string() + ": empty image");
  if (is_ppm(path)) {
    save_ppm(x, path);
  } else {
    save_png(x, path);
  }
}

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw ImageIoError("no such file: " + path.string());
  return is_ppm(path) ? load_ppm(path) : load_png(path);
}

void save_split(const std::vector<LabeledImage>& split, const fs::path& dir, const std::string& extension) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ImageIoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw ImageIoError("cannot write " + (dir / "manifest.jsonl").string());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const LabeledImage& item = split[i];
    char name[64];
    std::snprintf(name, sizeof name, "%05zu_id%04d_c%d%s", i, item.identity, item.camera, extension.c_str());
    save_image(item.image, dir / name);
    nlohmann::json row = {{"file", name}, {"identity", item.identity}, {"camera", item.camera}};
    manifest << row.dump() << "\n";
  }
  if (!manifest) throw ImageIoError("cannot write " + (dir / "manifest.jsonl").string());
}

std::vector<ManifestRow> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      rows.push_back(ManifestRow{j.at("file").get<std::string>(), j.at("identity").get<int>(), j.at("camera").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw ImageIoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<LabeledImage> load_split(const fs::path& dir) {
  std::vector<LabeledImage> out;
  for (const ManifestRow& row : read_manifest(dir)) {
    out.push_back(LabeledImage{load_image(dir / row.file), row.identity, row.camera});
  }
  return out;
}

}  // namespace mal
