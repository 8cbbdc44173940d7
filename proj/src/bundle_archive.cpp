#include "mer/bundle_archive.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "mer/error.hpp"

namespace fs = std::filesystem;

namespace mer {
namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width includes the trailing NUL.
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1),
                static_cast<unsigned long long>(value));
}

std::uint64_t get_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width && field[i] != '\0' && field[i] != ' '; ++i) {
    if (field[i] < '0' || field[i] > '7') {
      throw Error(ErrorKind::MalformedHeader, "archive: bad octal field");
    }
    v = (v << 3) | static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

std::string header(const std::string& name, std::uint64_t size, char type) {
  std::string block(kBlock, '\0');
  char* h = block.data();
  std::string base = name;
  std::string prefix;
  if (base.size() > 100) {
    const auto cut = base.rfind('/', 155);
    if (cut == std::string::npos || base.size() - cut - 1 > 100) {
      throw Error(ErrorKind::InvalidInput, "archive: path too long: " + name);
    }
    prefix = base.substr(0, cut);
    base = base.substr(cut + 1);
  }
  std::memcpy(h, base.data(), base.size());
  put_octal(h + 100, 8, type == '5' ? 0755 : 0644);
  put_octal(h + 108, 8, 0);
  put_octal(h + 116, 8, 0);
  put_octal(h + 124, 12, size);
  put_octal(h + 136, 12, 0);
  std::memset(h + 148, ' ', 8);
  h[156] = type;
  std::memcpy(h + 257, "ustar", 6);
  std::memcpy(h + 263, "00", 2);
  std::memcpy(h + 345, prefix.data(), prefix.size());
  unsigned sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) sum += static_cast<unsigned char>(h[i]);
  std::snprintf(h + 148, 8, "%06o", sum);
  h[155] = ' ';
  return block;
}

}  // namespace

std::string pack_directory(const fs::path& dir) {
  std::vector<fs::path> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() || e.is_directory()) entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());

  std::string out;
  for (const auto& p : entries) {
    std::string rel = fs::relative(p, dir).generic_string();
    if (fs::is_directory(p)) {
      out += header(rel + "/", 0, '5');
      continue;
    }
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string body = ss.str();
    out += header(rel, body.size(), '0');
    out += body;
    out.append((kBlock - body.size() % kBlock) % kBlock, '\0');
  }
  out.append(2 * kBlock, '\0');
  return out;
}

void unpack_archive(const std::string& archive, const fs::path& dest) {
  fs::create_directories(dest);
  std::size_t pos = 0;
  bool saw_end = false;
  while (pos + kBlock <= archive.size()) {
    const char* h = archive.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) {
      saw_end = true;
      break;
    }
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
      sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    }
    if (get_octal(h + 148, 8) != sum) {
      throw Error(ErrorKind::MalformedHeader, "archive: header checksum mismatch");
    }

    std::string name(h, strnlen(h, 100));
    const std::string prefix(h + 345, strnlen(h + 345, 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    const std::uint64_t size = get_octal(h + 124, 12);
    const char type = h[156];
    pos += kBlock;

    const fs::path rel = fs::path(name).lexically_normal();
    if (rel.is_absolute() || rel.empty() ||
        std::any_of(rel.begin(), rel.end(), [](const fs::path& c) { return c == ".."; })) {
      throw Error(ErrorKind::MalformedHeader, "archive: unsafe entry " + name);
    }
    if (type == '5') {
      fs::create_directories(dest / rel);
    } else if (type == '0' || type == '\0') {
      if (pos + size > archive.size()) {
        throw Error(ErrorKind::MalformedHeader, "archive: truncated entry " + name);
      }
      fs::create_directories((dest / rel).parent_path());
      std::ofstream out(dest / rel, std::ios::binary | std::ios::trunc);
      out.write(archive.data() + pos, static_cast<std::streamsize>(size));
    } else if (type == 'x' || type == 'g') {
      // pax metadata from GNU/BSD tar; the plain name field is enough here.
    } else {
      throw Error(ErrorKind::MalformedHeader, "archive: unsupported entry type for " + name);
    }
    pos += (size + kBlock - 1) / kBlock * kBlock;
  }
  if (!saw_end && pos != archive.size()) {
    throw Error(ErrorKind::MalformedHeader, "archive: truncated");
  }
  if (pos == 0) throw Error(ErrorKind::MalformedHeader, "archive: empty");
}

}  // namespace mer
