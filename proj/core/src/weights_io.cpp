#include "flam/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "flam/errors.hpp"

namespace flam {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'T', 'W', '1', '\0', '\0'};

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>(v & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size()) throw FormatError(path + ": truncated weight file reading " + what, pos);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = static_cast<uint32_t>(buf[pos]) | static_cast<uint32_t>(buf[pos + 1]) << 8 |
                 static_cast<uint32_t>(buf[pos + 2]) << 16 | static_cast<uint32_t>(buf[pos + 3]) << 24;
    pos += 4;
    return v;
  }
};

}  // namespace

uint32_t crc32_ieee(const uint8_t* data, std::size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

void save_sections(const std::string& path, const std::vector<WeightSection>& sections) {
  std::vector<uint8_t> body;
  put_u32(body, static_cast<uint32_t>(sections.size()));
  for (const WeightSection& s : sections) {
    if (s.values.size() != s.count()) throw ShapeError("save_sections: dims disagree with value count: " + s.name);
    put_u32(body, static_cast<uint32_t>(s.name.size()));
    body.insert(body.end(), s.name.begin(), s.name.end());
    put_u32(body, static_cast<uint32_t>(s.dims.size()));
    for (uint32_t d : s.dims) put_u32(body, d);
    const uint8_t* raw = reinterpret_cast<const uint8_t*>(s.values.data());
    body.insert(body.end(), raw, raw + s.values.size() * 8);
  }
  const uint32_t crc = crc32_ieee(body.data(), body.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weight file: " + path);
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  uint8_t crc_le[4] = {static_cast<uint8_t>(crc & 0xff), static_cast<uint8_t>((crc >> 8) & 0xff),
                       static_cast<uint8_t>((crc >> 16) & 0xff), static_cast<uint8_t>((crc >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(crc_le), 4);
  if (!out) throw IoError("failed writing weight file: " + path);
}

std::vector<WeightSection> load_sections(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw FormatError(path + ": bad weight-file magic", 0);
  if (buf.size() < 8 + 4 + 4) throw FormatError(path + ": file too short", buf.size());

  // checksum covers everything between the magic and the trailing CRC
  const std::size_t body_len = buf.size() - 8 - 4;
  const uint32_t stored = static_cast<uint32_t>(buf[buf.size() - 4]) |
                          static_cast<uint32_t>(buf[buf.size() - 3]) << 8 |
                          static_cast<uint32_t>(buf[buf.size() - 2]) << 16 |
                          static_cast<uint32_t>(buf[buf.size() - 1]) << 24;
  const uint32_t computed = crc32_ieee(buf.data() + 8, body_len);
  if (stored != computed) throw FormatError(path + ": checksum mismatch", buf.size() - 4);

  std::vector<uint8_t> body(buf.begin() + 8, buf.end() - 4);
  Reader r{body, 0, path};
  const uint32_t n_sections = r.u32("section count");
  std::vector<WeightSection> sections;
  sections.reserve(n_sections);
  for (uint32_t i = 0; i < n_sections; ++i) {
    WeightSection s;
    const uint32_t name_len = r.u32("section name length");
    if (name_len > 4096) throw FormatError(path + ": implausible section name length", r.pos + 8);
    r.need(name_len, "section name");
    s.name.assign(reinterpret_cast<const char*>(body.data() + r.pos), name_len);
    r.pos += name_len;
    const uint32_t rank = r.u32("section rank");
    if (rank > 8) throw FormatError(path + ": implausible section rank", r.pos + 8);
    std::size_t count = 1;
    for (uint32_t k = 0; k < rank; ++k) {
      const uint32_t d = r.u32("section dims");
      s.dims.push_back(d);
      count *= d;
    }
    r.need(count * 8, "section payload");
    s.values.resize(count);
    std::memcpy(s.values.data(), body.data() + r.pos, count * 8);
    r.pos += count * 8;
    sections.push_back(std::move(s));
  }
  if (r.pos != body.size()) throw FormatError(path + ": trailing bytes after last section", r.pos + 8);
  return sections;
}

}  // namespace flam
