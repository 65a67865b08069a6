#include "masscade/case_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "masscade/error.hpp"

namespace masscade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

// bit_depth 8 or 16, color_type PNG_COLOR_TYPE_GRAY or PNG_COLOR_TYPE_RGB.
// Rows are big-endian for 16-bit, as PNG stores them.
void write_png_rows(const fs::path& path, int width, int height, int bit_depth, int color_type,
                    const std::vector<png_bytep>& rows) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed for " + path.string());
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw DataError("failed writing PNG " + path.string());
}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> data;  // gray samples, big-endian when 16-bit
};

DecodedPng read_gray_png(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  FilePtr f = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed for " + path.string());
  }
  DecodedPng out;
  std::vector<png_bytep> rows;
  const char* volatile problem = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    problem = "corrupt PNG";
  } else {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      depth = 8;
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (png_get_channels(png, info) != 1 || (out.bit_depth != 8 && out.bit_depth != 16)) {
      problem = "unsupported PNG pixel format";
    } else {
      out.data.resize(rowbytes * out.height);
      rows.resize(out.height);
      for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + rowbytes * y;
      png_read_image(png, rows.data());
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (problem) throw DataError(std::string(problem) + ": " + path.string());
  return out;
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_png16(const fs::path& path, const GrayImage16& image) {
  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * 2;
  std::vector<std::uint8_t> buf(rowbytes * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    buf[2 * i] = static_cast<std::uint8_t>(image.pixels[i] >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(image.pixels[i] & 0xFF);
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buf.data() + rowbytes * y;
  write_png_rows(path, image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

GrayImage16 read_png16(const fs::path& path) {
  DecodedPng d = read_gray_png(path);
  GrayImage16 img(d.width, d.height);
  if (d.bit_depth == 16) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((d.data[2 * i] << 8) | d.data[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = static_cast<std::uint16_t>(d.data[i] * 257);
    }
  }
  return img;
}

void write_png8(const fs::path& path, int width, int height,
                const std::vector<std::uint8_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("write_png8: sample count does not match dimensions");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(samples.data()) + static_cast<std::size_t>(width) * y;
  }
  write_png_rows(path, width, height, 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb(const fs::path& path, int width, int height,
                   const std::vector<std::uint8_t>& samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height * 3) {
    throw InvalidArgument("write_png_rgb: sample count does not match dimensions");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(samples.data()) + static_cast<std::size_t>(width) * 3 * y;
  }
  write_png_rows(path, width, height, 8, PNG_COLOR_TYPE_RGB, rows);
}

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> samples(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), samples.begin(),
                 [](std::uint8_t b) -> std::uint8_t { return b ? 255 : 0; });
  write_png8(path, mask.width, mask.height, samples);
}

BinaryMask read_mask_png(const fs::path& path) {
  DecodedPng d = read_gray_png(path);
  BinaryMask m(d.width, d.height);
  const std::size_t bytes_per = d.bit_depth == 16 ? 2 : 1;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    bool on = d.data[bytes_per * i] != 0;
    if (bytes_per == 2) on = on || d.data[2 * i + 1] != 0;
    m.bits[i] = on ? 1 : 0;
  }
  return m;
}

void save_case(const MammogramCase& c, const fs::path& directory) {
  c.validate();
  const fs::path dir = directory / c.case_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  write_png16(dir / "image.png", c.image);
  write_mask_png(dir / "breast_mask.png", c.breast_mask);

  json masses = json::array();
  for (const auto& m : c.masses) {
    json poly = json::array();
    for (const auto& p : m.polygon) poly.push_back({p.x, p.y});
    masses.push_back({{"id", m.id}, {"polygon", poly}});
  }
  write_json(dir / "masses.json", masses);
  write_json(dir / "meta.json", {{"case_id", c.case_id},
                                 {"pixel_spacing_um", c.pixel_spacing_um},
                                 {"width", c.image.width},
                                 {"height", c.image.height}});
}

static std::vector<MassAnnotation> parse_masses(const fs::path& masses_path, int width, int height) {
  const json masses = read_json(masses_path);
  if (!masses.is_array()) throw DataError("masses.json must hold an array: " + masses_path.string());
  std::vector<MassAnnotation> out;
  try {
    for (const auto& jm : masses) {
      std::vector<Point2> poly;
      for (const auto& p : jm.at("polygon")) {
        poly.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      out.push_back(MassAnnotation::from_polygon(jm.at("id").get<std::string>(), std::move(poly),
                                                 width, height));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed mass entry in " + masses_path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string(e.what()) + " in " + masses_path.string());
  }
  return out;
}

MammogramCase load_case(const fs::path& directory, const std::string& case_id) {
  const fs::path dir = directory / case_id;
  if (!fs::is_directory(dir)) throw DataError("missing case directory " + dir.string());

  MammogramCase c;
  c.case_id = case_id;

  const fs::path meta_path = dir / "meta.json";
  const json meta = read_json(meta_path);
  if (!meta.is_object() || !meta.contains("pixel_spacing_um") ||
      !meta["pixel_spacing_um"].is_number()) {
    throw DataError("meta.json lacks numeric pixel_spacing_um: " + meta_path.string());
  }
  c.pixel_spacing_um = meta["pixel_spacing_um"].get<double>();
  if (!(c.pixel_spacing_um > 0.0)) {
    throw DataError("pixel_spacing_um must be positive: " + meta_path.string());
  }

  c.image = read_png16(dir / "image.png");
  const fs::path mask_path = dir / "breast_mask.png";
  c.breast_mask = read_mask_png(mask_path);
  if (c.breast_mask.width != c.image.width || c.breast_mask.height != c.image.height) {
    throw DataError("breast mask dimensions differ from image: " + mask_path.string());
  }

  c.masses = parse_masses(dir / "masses.json", c.image.width, c.image.height);
  return c;
}

std::vector<MassAnnotation> load_case_masses(const fs::path& directory,
                                             const std::string& case_id) {
  const fs::path dir = directory / case_id;
  const fs::path meta_path = dir / "meta.json";
  const json meta = read_json(meta_path);
  if (!meta.is_object() || !meta.contains("width") || !meta.contains("height") ||
      !meta["width"].is_number_integer() || !meta["height"].is_number_integer()) {
    throw DataError("meta.json lacks integer width/height: " + meta_path.string());
  }
  return parse_masses(dir / "masses.json", meta["width"].get<int>(), meta["height"].get<int>());
}

std::vector<std::string> list_cases(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw DataError("missing dataset directory " + directory.string());
  std::vector<std::string> ids;
  const fs::path manifest = directory / "manifest.json";
  if (fs::exists(manifest)) {
    const json j = read_json(manifest);
    try {
      for (const auto& id : j.at("cases")) ids.push_back(id.get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("malformed manifest " + manifest.string() + ": " + e.what());
    }
  } else {
    for (const auto& entry : fs::directory_iterator(directory)) {
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace masscade
