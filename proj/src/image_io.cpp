#include "mf/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mf {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(str_cat("cannot open '", path, "'"));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(str_cat("cannot open '", path, "' for writing"));
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError(str_cat("write failed for '", path, "'"));
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

void push_chunk(std::vector<uint8_t>& out, const char type[5],
                const std::vector<uint8_t>& data) {
  push_be32(out, static_cast<uint32_t>(data.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0, out.data() + type_at, uInt(4 + data.size()));
  push_be32(out, crc);
}

const uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a));
  const int pb = std::abs(p - int(b));
  const int pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

ImageU8 load_png(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  auto fail = [&](size_t at, const std::string& what) -> ParseError {
    return ParseError(str_cat("'", path, "': ", what, " at byte ", at));
  };
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    throw fail(0, "not a PNG signature");

  ImageU8 img;
  std::vector<uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;
  size_t at = 8;
  while (at < bytes.size()) {
    if (at + 8 > bytes.size()) throw fail(at, "truncated chunk header");
    const uint32_t len = be32(&bytes[at]);
    if (at + 12 + size_t(len) > bytes.size())
      throw fail(at, "truncated chunk payload");
    const char* type = reinterpret_cast<const char*>(&bytes[at + 4]);
    const uint8_t* data = &bytes[at + 8];
    const uint32_t want_crc = be32(&bytes[at + 8 + len]);
    const uint32_t got_crc = crc32(0, &bytes[at + 4], uInt(4 + len));
    if (want_crc != got_crc) throw fail(at + 8 + len, "chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw fail(at, "bad IHDR length");
      img.width = be32(data);
      img.height = be32(data + 4);
      const uint8_t depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8) throw fail(at + 16, "only 8-bit depth supported");
      if (color == 0)
        img.channels = 1;
      else if (color == 2)
        img.channels = 3;
      else
        throw fail(at + 17, "only gray / RGB color types supported");
      if (interlace != 0) throw fail(at + 20, "interlaced PNG unsupported");
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }
    at += 12 + len;
  }
  if (!saw_ihdr) throw fail(8, "missing IHDR");
  if (!saw_iend) throw fail(bytes.size(), "missing IEND");
  if (img.width == 0 || img.height == 0) throw fail(16, "zero image extent");

  const size_t row_bytes = img.width * img.channels;
  const size_t raw_size = img.height * (1 + row_bytes);
  std::vector<uint8_t> raw(raw_size);
  uLongf out_len = raw_size;
  const int rc = uncompress(raw.data(), &out_len, idat.data(), uLong(idat.size()));
  if (rc != Z_OK || out_len != raw_size)
    throw fail(at, "IDAT inflate failed or wrong pixel count");

  img.pixels.assign(img.height * row_bytes, 0);
  const size_t bpp = img.channels;
  for (size_t y = 0; y < img.height; ++y) {
    const uint8_t filter = raw[y * (1 + row_bytes)];
    const uint8_t* src = &raw[y * (1 + row_bytes) + 1];
    uint8_t* dst = &img.pixels[y * row_bytes];
    const uint8_t* up = y > 0 ? &img.pixels[(y - 1) * row_bytes] : nullptr;
    for (size_t i = 0; i < row_bytes; ++i) {
      const uint8_t a = i >= bpp ? dst[i - bpp] : 0;
      const uint8_t b = up ? up[i] : 0;
      const uint8_t c = (up && i >= bpp) ? up[i - bpp] : 0;
      uint8_t v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v = uint8_t(v + a); break;
        case 2: v = uint8_t(v + b); break;
        case 3: v = uint8_t(v + (int(a) + int(b)) / 2); break;
        case 4: v = uint8_t(v + paeth(a, b, c)); break;
        default:
          throw fail(y * (1 + row_bytes), str_cat("bad filter ", int(filter)));
      }
      dst[i] = v;
    }
  }
  return img;
}

void save_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ValueError(str_cat("save_png: ", img.channels,
                             " channels unsupported (want 1 or 3)"));
  if (img.pixels.size() != img.size_bytes())
    throw ShapeError("save_png: pixel buffer size mismatch");

  const size_t row_bytes = img.width * img.channels;
  std::vector<uint8_t> raw;
  raw.reserve(img.height * (1 + row_bytes));
  for (size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + y * row_bytes,
               img.pixels.begin() + (y + 1) * row_bytes);
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw IoError("save_png: deflate failed");
  comp.resize(comp_len);

  std::vector<uint8_t> out(kPngSig, kPngSig + 8);
  std::vector<uint8_t> ihdr;
  push_be32(ihdr, uint32_t(img.width));
  push_be32(ihdr, uint32_t(img.height));
  ihdr.push_back(8);
  ihdr.push_back(img.channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", comp);
  push_chunk(out, "IEND", {});
  write_file(path, out);
}

ImageU8 load_ppm(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  size_t at = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(str_cat("'", path, "': ", what, " at byte ", at));
  };
  auto skip_ws = [&] {
    while (at < bytes.size()) {
      if (bytes[at] == '#') {
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (std::isspace(bytes[at])) {
        ++at;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> size_t {
    skip_ws();
    if (at >= bytes.size() || !std::isdigit(bytes[at]))
      throw fail("expected integer");
    size_t v = 0;
    while (at < bytes.size() && std::isdigit(bytes[at]))
      v = v * 10 + (bytes[at++] - '0');
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P') throw fail("not a PNM file");
  const char kind = char(bytes[1]);
  if (kind != '5' && kind != '6') throw fail("only P5/P6 supported");
  at = 2;
  ImageU8 img;
  img.channels = kind == '6' ? 3 : 1;
  img.width = read_int();
  img.height = read_int();
  const size_t maxval = read_int();
  if (maxval != 255) throw fail("only maxval 255 supported");
  if (at >= bytes.size() || !std::isspace(bytes[at]))
    throw fail("missing separator before pixels");
  ++at;
  if (bytes.size() - at < img.size_bytes()) throw fail("truncated pixel data");
  img.pixels.assign(bytes.begin() + at, bytes.begin() + at + img.size_bytes());
  return img;
}

void save_ppm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ValueError("save_ppm: 1 or 3 channels only");
  std::vector<uint8_t> out;
  const std::string header = str_cat(img.channels == 3 ? "P6" : "P5", "\n",
                                     img.width, " ", img.height, "\n255\n");
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  write_file(path, out);
}

namespace {
std::string ext_of(const std::string& path) {
  const size_t dot = path.rfind('.');
  if (dot == std::string::npos) return "";
  std::string e = path.substr(dot + 1);
  std::transform(e.begin(), e.end(), e.begin(), ::tolower);
  return e;
}
}  // namespace

ImageU8 load_image(const std::string& path) {
  const std::string e = ext_of(path);
  if (e == "png") return load_png(path);
  if (e == "ppm" || e == "pgm") return load_ppm(path);
  throw ValueError(str_cat("load_image: unsupported extension '", e, "'"));
}

void save_image(const std::string& path, const ImageU8& img) {
  const std::string e = ext_of(path);
  if (e == "png") return save_png(path, img);
  if (e == "ppm" || e == "pgm") return save_ppm(path, img);
  throw ValueError(str_cat("save_image: unsupported extension '", e, "'"));
}

template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t = Tensor<T>::zeros({img.channels, img.height, img.width});
  T* tv = t.values().data();
  for (size_t y = 0; y < img.height; ++y)
    for (size_t x = 0; x < img.width; ++x)
      for (size_t c = 0; c < img.channels; ++c)
        tv[(c * img.height + y) * img.width + x] = static_cast<T>(
            img.pixels[(y * img.width + x) * img.channels + c] / 127.5 - 1.0);
  return t;
}

template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3 || (t.size(0) != 1 && t.size(0) != 3))
    throw ShapeError(str_cat("tensor_to_image: expected (1|3,H,W), got ",
                             shape_str(t.shape())));
  ImageU8 img;
  img.channels = t.size(0);
  img.height = t.size(1);
  img.width = t.size(2);
  img.pixels.assign(img.size_bytes(), 0);
  const T* tv = t.values().data();
  for (size_t y = 0; y < img.height; ++y)
    for (size_t x = 0; x < img.width; ++x)
      for (size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(
            double(tv[(c * img.height + y) * img.width + x]), -1.0, 1.0);
        img.pixels[(y * img.width + x) * img.channels + c] =
            uint8_t(std::lround((v + 1.0) * 127.5));
      }
  return img;
}

template <typename T>
Tensor<T> mask_to_tensor(const ImageU8& img) {
  if (img.channels != 1)
    throw ShapeError("mask_to_tensor: mask images must be single-channel");
  Tensor<T> t = Tensor<T>::zeros({1, img.height, img.width});
  for (size_t i = 0; i < img.pixels.size(); ++i)
    t.values()[i] = static_cast<T>(img.pixels[i] / 255.0);
  return t;
}

template <typename T>
ImageU8 tensor_to_mask(const Tensor<T>& t) {
  if (t.rank() != 3 || t.size(0) != 1)
    throw ShapeError(str_cat("tensor_to_mask: expected (1,H,W), got ",
                             shape_str(t.shape())));
  ImageU8 img;
  img.channels = 1;
  img.height = t.size(1);
  img.width = t.size(2);
  img.pixels.assign(img.size_bytes(), 0);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(double(t.values()[i]), 0.0, 1.0);
    img.pixels[i] = uint8_t(std::lround(v * 255.0));
  }
  return img;
}

template Tensor<float> image_to_tensor<float>(const ImageU8&);
template Tensor<double> image_to_tensor<double>(const ImageU8&);
template ImageU8 tensor_to_image<float>(const Tensor<float>&);
template ImageU8 tensor_to_image<double>(const Tensor<double>&);
template Tensor<float> mask_to_tensor<float>(const ImageU8&);
template Tensor<double> mask_to_tensor<double>(const ImageU8&);
template ImageU8 tensor_to_mask<float>(const Tensor<float>&);
template ImageU8 tensor_to_mask<double>(const Tensor<double>&);

}  // namespace mf
