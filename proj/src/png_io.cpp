#include <png.h>

#include <cstdio>
#include <memory>

#include "mer/error.hpp"
#include "mer/image.hpp"

namespace mer {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::MissingFile, path.string());

  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_stdio(&img, file.get()) == 0) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.height, img.width);
  if (out.pixels.empty()) {
    png_image_free(&img);
    throw Error(ErrorKind::MalformedHeader, path.string() + ": empty image");
  }
  if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + img.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr) ==
      0) {
    throw Error(ErrorKind::InvalidInput, path.string() + ": " + img.message);
  }
}

}  // namespace mer
