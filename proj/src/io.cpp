#include "xannot/io.hpp"

#include <png.h>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace xannot::io {

namespace {

Bytes encode(const void* data, int width, int height, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  Bytes pixels;
};

Decoded decode(std::span<const std::uint8_t> bytes, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(std::string("png decode: ") + image.message);
  }
  image.format = format;
  Decoded d;
  d.width = static_cast<int>(image.width);
  d.height = static_cast<int>(image.height);
  d.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, d.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(std::string("png decode: ") + image.message);
  }
  return d;
}

}  // namespace

Bytes encode_png(const PseudoColorImage& image) {
  if (image.width < 1 || image.height < 1) throw IoError("png encode: empty image");
  return encode(image.rgb.data(), image.width, image.height, PNG_FORMAT_RGB);
}

Bytes encode_png(const GrayPlane& plane) {
  if (plane.empty()) throw IoError("png encode: empty plane");
  return encode(plane.storage().data(), plane.width(), plane.height(), PNG_FORMAT_GRAY);
}

Bytes encode_mask_png(const BinaryMask& mask) {
  GrayPlane scaled(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    scaled.storage()[i] = mask.storage()[i] ? 255 : 0;
  }
  return encode_png(scaled);
}

PseudoColorImage decode_png_rgb(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes, PNG_FORMAT_RGB);
  PseudoColorImage out;
  out.width = d.width;
  out.height = d.height;
  out.rgb = std::move(d.pixels);
  return out;
}

GrayPlane decode_png_gray(std::span<const std::uint8_t> bytes) {
  Decoded d = decode(bytes, PNG_FORMAT_GRAY);
  return GrayPlane(d.width, d.height, std::move(d.pixels));
}

BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  GrayPlane g = decode_png_gray(bytes);
  for (auto& v : g.storage()) v = v != 0 ? 1 : 0;
  return g;
}

std::pair<int, int> png_dimensions(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(std::string("png header: ") + image.message);
  }
  const std::pair<int, int> dims{static_cast<int>(image.width), static_cast<int>(image.height)};
  png_image_free(&image);
  return dims;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return {b.begin(), b.end()};
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ValidationError("base64: length is not a multiple of 4");
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ValidationError("base64: invalid input");
  // EVP_DecodeBlock does not strip the padding bytes.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

}  // namespace xannot::io
