#include "iet/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <zlib.h>

#include "iet/parallel.hpp"

namespace iet::img {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         std::equal(suf.rbegin(), suf.rend(), s.rbegin(), [](char a, char b) {
           return std::tolower(a) == std::tolower(b);
         });
}

}  // namespace

uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

Tensor Image::to_tensor() const {
  Tensor t({height, width, 3});
  std::copy(data.begin(), data.end(), t.data());
  return t;
}

Image Image::from_tensor(const Tensor& t, bool clamp) {
  if (t.rank() != 3 || t.dim(2) != 3)
    throw DimensionError("image tensor must be [H x W x 3]");
  Image img;
  img.height = static_cast<int32_t>(t.dim(0));
  img.width = static_cast<int32_t>(t.dim(1));
  img.data.assign(t.data(), t.data() + t.numel());
  if (clamp)
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255)

Image decode_ppm(const std::vector<uint8_t>& bytes, const std::string& src) {
  size_t pos = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("ppm: " + msg, pos);
  };
  auto skip_space = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        return;
      }
    }
  };
  auto read_int = [&]() -> int64_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw fail("expected integer");
    int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 30)) throw fail("integer out of range");
      ++pos;
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw fail("missing P6 magic");
  pos = 2;
  const int64_t w = read_int();
  const int64_t h = read_int();
  const int64_t maxval = read_int();
  if (w < 1 || h < 1) throw fail("degenerate size");
  if (maxval != 255) throw fail("only maxval 255 supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw fail("expected single whitespace before raster");
  ++pos;
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - pos < need) {
    pos = bytes.size();
    throw fail("raster truncated");
  }

  Image img;
  img.height = static_cast<int32_t>(h);
  img.width = static_cast<int32_t>(w);
  img.source = src;
  img.data.resize(need);
  for (size_t i = 0; i < need; ++i)
    img.data[i] = static_cast<double>(bytes[pos + i]) / 255.0;
  return img;
}

std::vector<uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(quantize(v));
  return out;
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB, color type 2) over zlib

namespace {

constexpr uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void push_chunk(std::vector<uint8_t>& out, const char type[4],
                const std::vector<uint8_t>& payload) {
  push_be32(out, static_cast<uint32_t>(payload.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + payload.size()));
  push_be32(out, crc);
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  const int64_t w = img.width, h = img.height;
  const size_t stride = static_cast<size_t>(w) * 3;
  std::vector<uint8_t> raw(static_cast<size_t>(h) * (stride + 1));
  for (int64_t y = 0; y < h; ++y) {
    uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
    row[0] = 0;  // filter: none
    for (size_t i = 0; i < stride; ++i)
      row[1 + i] = quantize(img.data[static_cast<size_t>(y) * stride + i]);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png: deflate failed");
  compressed.resize(bound);

  std::vector<uint8_t> out(kPngSig, kPngSig + 8);
  std::vector<uint8_t> ihdr;
  push_be32(ihdr, static_cast<uint32_t>(w));
  push_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // interlace
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", compressed);
  push_chunk(out, "IEND", {});
  return out;
}

Image decode_png(const std::vector<uint8_t>& bytes, const std::string& src) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    throw ParseError("png: bad signature", 0);
  size_t pos = 8;
  int64_t w = -1, h = -1;
  std::vector<uint8_t> idat;
  bool saw_end = false;
  while (!saw_end) {
    if (bytes.size() - pos < 12)
      throw ParseError("png: truncated chunk header", pos);
    const uint32_t len = be32(bytes.data() + pos);
    if (bytes.size() - pos < 12 + static_cast<size_t>(len))
      throw ParseError("png: truncated chunk payload", pos);
    const uint8_t* type = bytes.data() + pos + 4;
    const uint8_t* payload = bytes.data() + pos + 8;
    uint32_t crc_calc = crc32(0L, Z_NULL, 0);
    crc_calc = crc32(crc_calc, type, 4 + len);
    const uint32_t crc_file = be32(payload + len);
    if (crc_calc != crc_file)
      throw ParseError("png: chunk crc mismatch", pos + 8 + len);

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw ParseError("png: bad IHDR length", pos);
      w = be32(payload);
      h = be32(payload + 4);
      const uint8_t depth = payload[8], color = payload[9];
      if (w < 1 || h < 1) throw ParseError("png: degenerate size", pos + 8);
      if (depth != 8 || color != 2)
        throw ParseError("png: only 8-bit RGB supported", pos + 16);
      if (payload[10] != 0 || payload[11] != 0 || payload[12] != 0)
        throw ParseError("png: unsupported compression/filter/interlace",
                         pos + 18);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
    }
    pos += 12 + len;
  }
  if (w < 0) throw ParseError("png: missing IHDR", pos);
  if (idat.empty()) throw ParseError("png: missing IDAT", pos);

  const size_t stride = static_cast<size_t>(w) * 3;
  std::vector<uint8_t> raw(static_cast<size_t>(h) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(),
                             static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size())
    throw ParseError("png: inflate failed", pos);

  Image img;
  img.height = static_cast<int32_t>(h);
  img.width = static_cast<int32_t>(w);
  img.source = src;
  img.data.resize(static_cast<size_t>(h) * stride);
  std::vector<uint8_t> prev(stride, 0);
  std::vector<uint8_t> cur(stride, 0);
  for (int64_t y = 0; y < h; ++y) {
    const uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
    const uint8_t filter = row[0];
    const uint8_t* data = row + 1;
    for (size_t i = 0; i < stride; ++i) {
      const int left = i >= 3 ? cur[i - 3] : 0;
      const int up = prev[i];
      const int ul = i >= 3 ? prev[i - 3] : 0;
      int v = data[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) / 2; break;
        case 4: v += paeth(left, up, ul); break;
        default:
          throw ParseError("png: unknown filter type " + std::to_string(filter),
                           static_cast<size_t>(y) * (stride + 1));
      }
      cur[i] = static_cast<uint8_t>(v & 0xff);
      img.data[static_cast<size_t>(y) * stride + i] =
          static_cast<double>(cur[i]) / 255.0;
    }
    std::swap(prev, cur);
  }
  return img;
}

// ---------------------------------------------------------------------------

Image load_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (ends_with(path, ".ppm")) return decode_ppm(bytes, path);
  if (ends_with(path, ".png")) return decode_png(bytes, path);
  // Sniff by content as a fallback.
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6')
    return decode_ppm(bytes, path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
    return decode_png(bytes, path);
  throw ParseError("unrecognized image format: " + path, 0);
}

void save_image(const Image& img, const std::string& path) {
  if (img.height < 1 || img.width < 1 ||
      img.data.size() != static_cast<size_t>(img.height) * img.width * 3)
    throw DimensionError("save_image: malformed image");
  if (ends_with(path, ".png"))
    write_file(path, encode_png(img));
  else
    write_file(path, encode_ppm(img));
}

// ---------------------------------------------------------------------------
// bicubic resize, Catmull-Rom a = -0.5, edge clamp

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return a * (((t - 5.0) * t + 8.0) * t - 4.0);
  return 0.0;
}

// One separable pass along the width axis of a [h x w x 3] buffer.
std::vector<double> resize_axis(const std::vector<double>& src, int64_t h,
                                int64_t w, int64_t out_w, int32_t num,
                                int32_t den) {
  std::vector<double> dst(static_cast<size_t>(h) * out_w * 3);
  const double ratio = static_cast<double>(den) / static_cast<double>(num);
  for (int64_t ox = 0; ox < out_w; ++ox) {
    const double sx = (static_cast<double>(ox) + 0.5) * ratio - 0.5;
    const int64_t base = static_cast<int64_t>(std::floor(sx));
    const double frac = sx - static_cast<double>(base);
    double wgt[4];
    int64_t tap[4];
    for (int t = 0; t < 4; ++t) {
      wgt[t] = cubic_weight(frac - static_cast<double>(t - 1));
      tap[t] = std::clamp<int64_t>(base + t - 1, 0, w - 1);
    }
    for (int64_t y = 0; y < h; ++y) {
      const double* row = src.data() + static_cast<size_t>(y) * w * 3;
      double* out = dst.data() + (static_cast<size_t>(y) * out_w + ox) * 3;
      for (int c = 0; c < 3; ++c) {
        out[c] = wgt[0] * row[tap[0] * 3 + c] + wgt[1] * row[tap[1] * 3 + c] +
                 wgt[2] * row[tap[2] * 3 + c] + wgt[3] * row[tap[3] * 3 + c];
      }
    }
  }
  return dst;
}

// Transpose [h x w x 3] -> [w x h x 3].
std::vector<double> transpose_hw(const std::vector<double>& src, int64_t h,
                                 int64_t w) {
  std::vector<double> dst(src.size());
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        dst[(static_cast<size_t>(x) * h + y) * 3 + c] =
            src[(static_cast<size_t>(y) * w + x) * 3 + c];
  return dst;
}

}  // namespace

Image bicubic_resize(const Image& img, int32_t num, int32_t den) {
  if (num < 1 || den < 1) throw ConfigError("bicubic_resize: bad ratio");
  const int64_t h = img.height, w = img.width;
  const int64_t out_h = std::max<int64_t>(1, h * num / den);
  const int64_t out_w = std::max<int64_t>(1, w * num / den);

  auto horiz = resize_axis(img.data, h, w, out_w, num, den);
  auto t = transpose_hw(horiz, h, out_w);
  auto vert = resize_axis(t, out_w, h, out_h, num, den);
  auto final = transpose_hw(vert, out_w, out_h);

  Image out;
  out.height = static_cast<int32_t>(out_h);
  out.width = static_cast<int32_t>(out_w);
  out.source = img.source;
  out.data = std::move(final);
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError("psnr: image shapes differ");
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace iet::img
