#include "cvit/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cvit/errors.hpp"

namespace cvit {
namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

std::size_t parse_header_number(std::istream& in, const char* field,
                                const std::filesystem::path& path) {
  const std::string token = next_token(in);
  std::size_t pos = 0;
  unsigned long value = 0;
  try {
    value = std::stoul(token, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (token.empty() || pos != token.size()) {
    throw FormatError(path.string() + ": bad PPM " + field + " '" + token + "'");
  }
  return value;
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (next_token(in) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const std::size_t width = parse_header_number(in, "width", path);
  const std::size_t height = parse_header_number(in, "height", path);
  const std::size_t maxval = parse_header_number(in, "maxval", path);
  if (maxval != 255) {
    throw FormatError(path.string() + ": maxval " + std::to_string(maxval) +
                      " unsupported, expected 255");
  }
  if (width == 0 || height == 0) throw FormatError(path.string() + ": empty image");
  std::vector<std::uint8_t> interleaved(3 * width * height);
  in.read(reinterpret_cast<char*>(interleaved.data()),
          static_cast<std::streamsize>(interleaved.size()));
  if (static_cast<std::size_t>(in.gcount()) != interleaved.size()) {
    throw FormatError(path.string() + ": truncated pixel data at byte " +
                      std::to_string(in.gcount()) + " of " +
                      std::to_string(interleaved.size()));
  }
  ImageU8 img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = interleaved[(y * width + x) * 3 + c];
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> interleaved(3 * img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) interleaved[(y * img.width + x) * 3 + c] = img.at(c, y, x);
    }
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_permutation_file(const std::filesystem::path& path, const BlockPermutation& perm) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::uint32_t v : perm.forward) out << v << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint32_t> read_permutation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint32_t> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::size_t pos = 0;
      const unsigned long v = std::stoul(line, &pos);
      if (pos != line.size()) throw std::invalid_argument(line);
      values.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": not an integer");
    }
  }
  return values;
}

std::string permutation_file_name(EncryptionKey key, std::size_t patch_size) {
  return "perm_" + std::to_string(key.seed) + "_" + std::to_string(patch_size) + ".txt";
}

}  // namespace cvit
