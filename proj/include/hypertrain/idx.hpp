#pragma once

// IDX container: 2 zero bytes, a type code, a dimension count, then one
// big-endian uint32 per dimension, followed by big-endian element data.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hypertrain::idx {

enum class DType : std::uint8_t {
    u8 = 0x08,
    i8 = 0x09,
    i16 = 0x0B,
    i32 = 0x0C,
    f32 = 0x0D,
    f64 = 0x0E,
};

inline constexpr std::uint32_t kMnistImagesMagic = 0x00000803;
inline constexpr std::uint32_t kMnistLabelsMagic = 0x00000801;

struct Array {
    DType dtype = DType::u8;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    std::uint32_t magic() const;
};

/// Parses an in-memory IDX file. Throws FormatError carrying the byte offset.
Array parse(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize(const Array& array);

Array read_file(const std::string& path);
void write_file(const std::string& path, const Array& array);

std::vector<std::uint8_t> read_bytes(const std::string& path);

} // namespace hypertrain::idx
