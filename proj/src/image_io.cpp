#include "camsticker/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace camsticker {

unsigned char quantize8(double v) {
  return static_cast<unsigned char>(std::nearbyint(clamp01(v) * 255.0));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const std::string& path) {
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Image from_rgb8(const std::vector<unsigned char>& bytes, int h, int w) {
  Image img(h, w);
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    img.data[k] = bytes[k] / 255.0;
  }
  return img;
}

// --- PNG ---

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 i = 0; i < h; ++i) {
    rows[i] = bytes.data() + static_cast<std::size_t>(i) * w * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(bytes, static_cast<int>(h), static_cast<int>(w));
}

void save_png(const Image& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write image file: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        row[static_cast<std::size_t>(j) * 3 + c] = quantize8(img.at(i, j, c));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// --- JPEG ---

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_throw(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image load_jpeg(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image file: " + path);

  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_throw;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("failed to decode JPEG: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const int w = cinfo.output_width;
  const int h = cinfo.output_height;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* rowp =
        bytes.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_rgb8(bytes, h, w);
}

void save_jpeg(const Image& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write image file: " + path);

  jpeg_compress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_throw;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw std::runtime_error("failed to encode JPEG: " + path);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp.get());
  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  while (cinfo.next_scanline < cinfo.image_height) {
    const int i = cinfo.next_scanline;
    for (int j = 0; j < img.width; ++j) {
      for (int c = 0; c < 3; ++c) {
        row[static_cast<std::size_t>(j) * 3 + c] = quantize8(img.at(i, j, c));
      }
    }
    unsigned char* rowp = row.data();
    jpeg_write_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

}  // namespace

Image load_image(const std::string& path) {
  std::string ext = lower_ext(path);
  if (ext == "png") return load_png(path);
  if (ext == "jpg" || ext == "jpeg") return load_jpeg(path);
  throw std::runtime_error("unsupported image format (want .png/.jpg): " +
                           path);
}

void save_image(const Image& img, const std::string& path) {
  if (img.height < 1 || img.width < 1) {
    throw std::invalid_argument("save_image: empty image");
  }
  std::string ext = lower_ext(path);
  if (ext == "png") {
    save_png(img, path);
  } else if (ext == "jpg" || ext == "jpeg") {
    save_jpeg(img, path);
  } else {
    throw std::runtime_error("unsupported image format (want .png/.jpg): " +
                             path);
  }
}

}  // namespace camsticker
