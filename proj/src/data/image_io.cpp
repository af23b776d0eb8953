#include "data/image_io.hpp"

#include <fstream>

#include "core/error.hpp"

namespace stnet {

namespace {

// next token after whitespace and '#' comments
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += static_cast<char>(ch);
  }
  return tok;
}

struct PnmHeader {
  ImageHeader hdr;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path) {
  std::string magic = next_token(in);
  PnmHeader out;
  if (magic == "P6")
    out.hdr.c = 3;
  else if (magic == "P5")
    out.hdr.c = 1;
  else
    data_error(path + ": unsupported image format (expected binary PPM/PGM)");
  try {
    out.hdr.w = std::stoi(next_token(in));
    out.hdr.h = std::stoi(next_token(in));
    out.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    data_error(path + ": malformed PNM header");
  }
  if (out.hdr.w <= 0 || out.hdr.h <= 0) data_error(path + ": invalid image dimensions");
  if (out.maxval != 255) data_error(path + ": unsupported maxval " + std::to_string(out.maxval));
  return out;
}

}  // namespace

ImageU8 read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot open image " + path);
  PnmHeader ph = read_pnm_header(in, path);
  ImageU8 img(ph.hdr.w, ph.hdr.h, ph.hdr.c);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    data_error(path + ": truncated image data");
  return img;
}

ImageHeader read_image_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot open image " + path);
  return read_pnm_header(in, path).hdr;
}

void write_image(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) data_error("write_image: unsupported channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write image " + path);
  out << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) data_error("failed writing image " + path);
}

void write_pgm16(const std::string& path, const std::vector<uint16_t>& data, int w, int h) {
  if (data.size() != static_cast<size_t>(w) * h) data_error("write_pgm16: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write image " + path);
  out << "P5\n" << w << " " << h << "\n65535\n";
  for (uint16_t v : data) {
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
  if (!out) data_error("failed writing image " + path);
}

}  // namespace stnet
