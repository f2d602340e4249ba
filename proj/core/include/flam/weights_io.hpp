#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flam {

// One named tensor in the weight file.
struct WeightSection {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<double> values;  // prod(dims) little-endian float64 on disk

  std::size_t count() const {
    std::size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

// File layout (all integers little-endian u32):
//   magic "FLATW1" padded with NULs to 8 bytes
//   section count
//   per section: name length, name bytes, rank, rank dims, float64 payload
//   CRC-32 (IEEE) of every byte between the section count and the checksum
void save_sections(const std::string& path, const std::vector<WeightSection>& sections);
std::vector<WeightSection> load_sections(const std::string& path);

uint32_t crc32_ieee(const uint8_t* data, std::size_t len);

}  // namespace flam
