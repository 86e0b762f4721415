#include "dsf/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dsf {

ImageU8 ImageU8::filled(int height, int width, uint8_t r, uint8_t g, uint8_t b) {
  ImageU8 img;
  img.height = height;
  img.width = width;
  img.rgb.resize(static_cast<size_t>(height) * width * 3);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

Tensor image_to_tensor(const ImageU8& img) {
  int h = img.height, w = img.width;
  std::vector<double> data(static_cast<size_t>(3) * h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c)
        data[(static_cast<size_t>(c) * h + y) * w + x] = p[c] / 255.0;
    }
  }
  return Tensor::from_data({3, h, w}, std::move(data));
}

ImageU8 tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw std::invalid_argument("tensor_to_image: expected [3 x H x W]");
  int h = t.dim(1), w = t.dim(2);
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.rgb.resize(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c) {
        double v = t.data()[(static_cast<size_t>(c) * h + y) * w + x];
        v = std::clamp(v, 0.0, 1.0);
        p[c] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (out_h == img.height && out_w == img.width) return img;
  ImageU8 out;
  out.height = out_h;
  out.width = out_w;
  out.rgb.resize(static_cast<size_t>(out_h) * out_w * 3);
  double sy = static_cast<double>(img.height) / out_h;
  double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, img.height - 1);
    int y1c = std::clamp(y0 + 1, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, img.width - 1);
      int x1c = std::clamp(x0 + 1, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) {
        double v = (1 - wy) * ((1 - wx) * img.px(y0c, x0c)[c] + wx * img.px(y0c, x1c)[c]) +
                   wy * ((1 - wx) * img.px(y1c, x0c)[c] + wx * img.px(y1c, x1c)[c]);
        out.px(y, x)[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

namespace {

void put_be32(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<uint8_t>(v & 0xff));
}

uint32_t read_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
  put_be32(out, static_cast<uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  put_be32(out, crc);
}

uint8_t paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
  if (img.height <= 0 || img.width <= 0 ||
      img.rgb.size() != static_cast<size_t>(img.height) * img.width * 3) {
    throw std::invalid_argument("write_png: malformed image");
  }
  const size_t row_bytes = static_cast<size_t>(img.width) * 3;
  std::vector<uint8_t> raw((row_bytes + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw[y * (row_bytes + 1)] = 0;  // filter type none
    std::memcpy(raw.data() + y * (row_bytes + 1) + 1, img.rgb.data() + y * row_bytes, row_bytes);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(comp_len);
  if (compress2(compressed.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("write_png: deflate failed");
  }
  compressed.resize(comp_len);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(img.width));
  put_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_png: cannot open " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("write_png: write failed for " + path);
}

ImageU8 read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) {
    throw std::runtime_error("read_png: not a png file: " + path);
  }

  int width = 0, height = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= file.size()) {
    uint32_t len = read_be32(file.data() + pos);
    if (pos + 12 + len > file.size()) throw std::runtime_error("read_png: truncated chunk in " + path);
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const uint8_t* payload = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(read_be32(payload));
      height = static_cast<int>(read_be32(payload + 4));
      int bit_depth = payload[8], color_type = payload[9], interlace = payload[12];
      if (bit_depth != 8 || color_type != 2 || interlace != 0) {
        throw std::runtime_error("read_png: unsupported png variant (need 8-bit RGB, no interlace)");
      }
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || idat.empty()) throw std::runtime_error("read_png: malformed png: " + path);

  const size_t row_bytes = static_cast<size_t>(width) * 3;
  std::vector<uint8_t> raw((row_bytes + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw std::runtime_error("read_png: inflate failed for " + path);
  }

  ImageU8 img;
  img.height = height;
  img.width = width;
  img.rgb.resize(row_bytes * height);
  std::vector<uint8_t> prev(row_bytes, 0);
  for (int y = 0; y < height; ++y) {
    uint8_t filter = raw[y * (row_bytes + 1)];
    const uint8_t* src = raw.data() + y * (row_bytes + 1) + 1;
    uint8_t* dst = img.rgb.data() + y * row_bytes;
    for (size_t i = 0; i < row_bytes; ++i) {
      int left = i >= 3 ? dst[i - 3] : 0;
      int up = prev[i];
      int ul = i >= 3 ? prev[i - 3] : 0;
      switch (filter) {
        case 0: dst[i] = src[i]; break;
        case 1: dst[i] = static_cast<uint8_t>(src[i] + left); break;
        case 2: dst[i] = static_cast<uint8_t>(src[i] + up); break;
        case 3: dst[i] = static_cast<uint8_t>(src[i] + ((left + up) >> 1)); break;
        case 4: dst[i] = static_cast<uint8_t>(src[i] + paeth(left, up, ul)); break;
        default: throw std::runtime_error("read_png: unknown filter type in " + path);
      }
    }
    std::memcpy(prev.data(), dst, row_bytes);
  }
  return img;
}

}  // namespace dsf
