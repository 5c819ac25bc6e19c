#include "stereocenter/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "stereocenter/error.hpp"

namespace sc {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string token = next_token(in);
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kIoError, "bad PGM header in " + path.string());
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") {
    throw Error(ErrorCode::kIoError, path.string() + " is not a PGM file");
  }
  const int width = header_int(in, path);
  const int height = header_int(in, path);
  const int maxval = header_int(in, path);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::kIoError, "unsupported PGM geometry in " + path.string());
  }
  GrayImage image(width, height);
  if (magic == "P5") {
    in.read(reinterpret_cast<char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
    if (!in) throw Error(ErrorCode::kIoError, "truncated PGM data in " + path.string());
  } else {
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(header_int(in, path));
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace sc
