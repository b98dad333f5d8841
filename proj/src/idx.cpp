#include "hypertrain/idx.hpp"

#include "hypertrain/errors.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace hypertrain::idx {

namespace {

std::size_t element_size(DType t)
{
    switch (t) {
    case DType::u8:
    case DType::i8:
        return 1;
    case DType::i16:
        return 2;
    case DType::i32:
    case DType::f32:
        return 4;
    case DType::f64:
        return 8;
    }
    return 0;
}

bool known_dtype(std::uint8_t code)
{
    return code == 0x08 || code == 0x09 || code == 0x0B || code == 0x0C || code == 0x0D || code == 0x0E;
}

std::uint64_t read_be(const std::uint8_t* p, std::size_t n)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
        v = (v << 8) | p[i];
    return v;
}

void write_be(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n)
{
    for (std::size_t i = n; i-- > 0;)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

double decode(DType t, const std::uint8_t* p)
{
    switch (t) {
    case DType::u8:
        return p[0];
    case DType::i8:
        return static_cast<std::int8_t>(p[0]);
    case DType::i16:
        return static_cast<std::int16_t>(read_be(p, 2));
    case DType::i32:
        return static_cast<std::int32_t>(read_be(p, 4));
    case DType::f32:
        return std::bit_cast<float>(static_cast<std::uint32_t>(read_be(p, 4)));
    case DType::f64:
        return std::bit_cast<double>(read_be(p, 8));
    }
    return 0.0;
}

void encode(std::vector<std::uint8_t>& out, DType t, double v)
{
    switch (t) {
    case DType::u8:
        out.push_back(static_cast<std::uint8_t>(v));
        return;
    case DType::i8:
        out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
        return;
    case DType::i16:
        write_be(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)), 2);
        return;
    case DType::i32:
        write_be(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)), 4);
        return;
    case DType::f32:
        write_be(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
        return;
    case DType::f64:
        write_be(out, std::bit_cast<std::uint64_t>(v), 8);
        return;
    }
}

} // namespace

std::uint32_t Array::magic() const
{
    return (static_cast<std::uint32_t>(dtype) << 8) | static_cast<std::uint32_t>(dims.size());
}

Array parse(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 4)
        throw FormatError("IDX header truncated", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0)
        throw FormatError("IDX magic must start with two zero bytes", 0);
    if (!known_dtype(bytes[2])) {
        char code[8];
        std::snprintf(code, sizeof code, "0x%02x", bytes[2]);
        throw FormatError(std::string("unknown IDX element type ") + code, 2);
    }
    Array out;
    out.dtype = static_cast<DType>(bytes[2]);
    const std::size_t ndims = bytes[3];
    if (ndims == 0)
        throw FormatError("IDX file declares zero dimensions", 3);

    std::size_t offset = 4;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        if (offset + 4 > bytes.size())
            throw FormatError("IDX dimension list truncated", bytes.size());
        const auto dim = static_cast<std::uint32_t>(read_be(bytes.data() + offset, 4));
        out.dims.push_back(dim);
        count *= dim;
        offset += 4;
    }
    const std::size_t esize = element_size(out.dtype);
    const std::size_t needed = offset + count * esize;
    if (bytes.size() < needed)
        throw FormatError("IDX data truncated: expected " + std::to_string(count) + " elements",
                          bytes.size());
    if (bytes.size() > needed)
        throw FormatError("IDX file has trailing bytes", needed);
    out.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        out.values[i] = decode(out.dtype, bytes.data() + offset + i * esize);
    return out;
}

std::vector<std::uint8_t> serialize(const Array& array)
{
    std::size_t count = 1;
    for (auto d : array.dims)
        count *= d;
    if (count != array.values.size())
        throw ShapeError("IDX dims do not match value count");
    if (array.dims.empty() || array.dims.size() > 255)
        throw ShapeError("IDX arrays need between 1 and 255 dimensions");
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * array.dims.size() + count * element_size(array.dtype));
    write_be(out, array.magic(), 4);
    for (auto d : array.dims)
        write_be(out, d, 4);
    for (double v : array.values)
        encode(out, array.dtype, v);
    return out;
}

std::vector<std::uint8_t> read_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Array read_file(const std::string& path) { return parse(read_bytes(path)); }

void write_file(const std::string& path, const Array& array)
{
    const auto bytes = serialize(array);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace hypertrain::idx
