#include "t2f/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "t2f/errors.hpp"

namespace t2f {

namespace {

void check_image(const Tensor& img, const char* op) {
  if (img.rank() != 3 || img.shape()[0] != 3) {
    throw DataError(std::string(op) + ": expected [3,H,W] image, got " +
                    shape_str(img.shape()));
  }
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
  return tail == suffix;
}

// ---- PPM (P6, 8-bit) ----

int ppm_next_value(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw DataError(path + ": truncated PPM header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw DataError(path + ": malformed PPM header");
  return value;
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw DataError(path + ": not a P6 PPM file");
  }
  const int w = ppm_next_value(in, path);
  const int h = ppm_next_value(in, path);
  const int maxval = ppm_next_value(in, path);
  if (maxval != 255) {
    throw DataError(path + ": unsupported PPM maxval " +
                    std::to_string(maxval) + " (need 255)");
  }
  if (w <= 0 || h <= 0) throw DataError(path + ": bad PPM dimensions");
  std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
  if (static_cast<size_t>(in.gcount()) != rgb.size()) {
    throw DataError(path + ": truncated PPM pixel data");
  }
  return image_from_bytes(h, w, rgb);
}

void write_ppm(const std::string& path, const Tensor& img) {
  const size_t h = img.shape()[1], w = img.shape()[2];
  const std::vector<uint8_t> rgb = image_to_bytes(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  if (!out) throw DataError("failed writing image " + path);
}

// ---- PNG (8-bit RGB, non-interlaced) ----

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

Tensor read_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint8_t> rgb;
  size_t w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": PNG decode failed");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  if (png_get_bit_depth(png, info) != 8 ||
      png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB ||
      png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": only 8-bit non-interlaced RGB PNG supported");
  }
  rgb.resize(w * h * 3);
  std::vector<png_bytep> rows(h);
  for (size_t y = 0; y < h; ++y) rows[y] = rgb.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image_from_bytes(h, w, rgb);
}

void write_png(const std::string& path, const Tensor& img) {
  const size_t h = img.shape()[1], w = img.shape()[2];
  std::vector<uint8_t> rgb = image_to_bytes(img);
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write image " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(path + ": PNG encode failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (size_t y = 0; y < h; ++y) rows[y] = rgb.data() + y * w * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_image(const std::string& path) {
  if (has_suffix(path, ".png")) return read_png(path);
  return read_ppm(path);
}

void write_image(const std::string& path, const Tensor& img) {
  check_image(img, "write_image");
  if (has_suffix(path, ".png")) {
    write_png(path, img);
  } else if (has_suffix(path, ".ppm")) {
    write_ppm(path, img);
  } else {
    throw DataError("write_image: unsupported extension on " + path +
                    " (use .ppm or .png)");
  }
}

std::vector<uint8_t> image_to_bytes(const Tensor& img) {
  check_image(img, "image_to_bytes");
  const size_t h = img.shape()[1], w = img.shape()[2], hw = h * w;
  const double* v = img.values().data();
  std::vector<uint8_t> rgb(hw * 3);
  for (size_t i = 0; i < hw; ++i) {
    for (size_t c = 0; c < 3; ++c) {
      double x = (v[c * hw + i] + 1.0) * 0.5 * 255.0;
      x = std::nearbyint(x);
      if (x < 0.0) x = 0.0;
      if (x > 255.0) x = 255.0;
      rgb[i * 3 + c] = static_cast<uint8_t>(x);
    }
  }
  return rgb;
}

Tensor image_from_bytes(size_t h, size_t w, const std::vector<uint8_t>& rgb) {
  if (rgb.size() != h * w * 3) {
    throw DataError("image_from_bytes: byte count does not match dimensions");
  }
  const size_t hw = h * w;
  std::vector<double> v(3 * hw);
  for (size_t i = 0; i < hw; ++i) {
    for (size_t c = 0; c < 3; ++c) {
      v[c * hw + i] = static_cast<double>(rgb[i * 3 + c]) / 255.0 * 2.0 - 1.0;
    }
  }
  return Tensor::from_data({3, h, w}, std::move(v));
}

Tensor make_row_grid(const std::vector<Tensor>& panels, size_t separator) {
  if (panels.empty()) throw DataError("make_row_grid: no panels");
  const size_t h = panels[0].shape()[1], w = panels[0].shape()[2];
  for (const auto& p : panels) {
    check_image(p, "make_row_grid");
    if (p.shape()[1] != h || p.shape()[2] != w) {
      throw DataError("make_row_grid: panels differ in size");
    }
  }
  const size_t total_w = panels.size() * w + (panels.size() - 1) * separator;
  Tensor grid = Tensor::full({3, h, total_w}, 1.0);  // white background
  auto& gv = grid.mutable_values();
  for (size_t p = 0; p < panels.size(); ++p) {
    const size_t x0 = p * (w + separator);
    const double* pv = panels[p].values().data();
    for (size_t c = 0; c < 3; ++c) {
      for (size_t y = 0; y < h; ++y) {
        std::memcpy(gv.data() + (c * h + y) * total_w + x0,
                    pv + (c * h + y) * w, w * sizeof(double));
      }
    }
  }
  return grid;
}

}  // namespace t2f
