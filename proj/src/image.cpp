#include "vseg/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace vseg {

std::uint8_t quantize8(float v) {
  const float q = std::round(v * 255.0f);
  return std::uint8_t(q < 0.f ? 0.f : (q > 255.f ? 255.f : q));
}

namespace {

// reads the next integer token, skipping whitespace and '#' comments
int read_pnm_int(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  require(ch != EOF && std::isdigit(ch), "malformed PNM header in " + path);
  int v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    ch = in.get();
  }
  return v;
}

void read_pnm_header(std::istream& in, const std::string& path, const char* magic,
                     int& w, int& h) {
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  require(in.good() && m0 == magic[0] && m1 == magic[1],
          "bad magic number in " + path + " (expected " + magic + ")");
  w = read_pnm_int(in, path);
  h = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  require(maxval == 255, "unsupported maxval in " + path + " (only 255 supported)");
  require(w > 0 && h > 0, "degenerate extents in " + path);
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
  require(img.c == 3, "write_ppm: image must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_ppm: cannot open " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<std::uint8_t> row(std::size_t(img.w) * 3);
  const std::size_t plane = std::size_t(img.h) * img.w;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        row[std::size_t(x) * 3 + ch] = quantize8(img.data[ch * plane + std::size_t(y) * img.w + x]);
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  require(out.good(), "write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_ppm: cannot open " + path);
  int w = 0, h = 0;
  read_pnm_header(in, path, "P6", w, h);
  Image img(3, h, w);
  std::vector<std::uint8_t> row(std::size_t(w) * 3);
  const std::size_t plane = std::size_t(h) * w;
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    require(in.gcount() == std::streamsize(row.size()), "truncated PPM payload in " + path);
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.data[ch * plane + std::size_t(y) * w + x] =
            float(row[std::size_t(x) * 3 + ch]) / 255.0f;
  }
  return img;
}

void write_pgm(const std::string& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_pgm: cannot open " + path);
  out << "P5\n" << labels.w << " " << labels.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data.data()),
            std::streamsize(labels.data.size()));
  require(out.good(), "write_pgm: write failed for " + path);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_pgm: cannot open " + path);
  int w = 0, h = 0;
  read_pnm_header(in, path, "P5", w, h);
  LabelMap labels(h, w);
  in.read(reinterpret_cast<char*>(labels.data.data()), std::streamsize(labels.data.size()));
  require(in.gcount() == std::streamsize(labels.data.size()),
          "truncated PGM payload in " + path);
  return labels;
}

}  // namespace vseg
