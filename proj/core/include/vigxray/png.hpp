#pragma once

#include <cstdint>
#include <vector>

#include "vigxray/image.hpp"

namespace vigxray {

// Minimal PNG codec backed by zlib.
//
// Decoder accepts 8-bit gray (color type 0), RGB (2) and RGBA (6),
// non-interlaced. Everything else is reported as UnsupportedFormat;
// structural damage (bad CRC, truncated/invalid IDAT) as CorruptStream.
ImageRGB decode_png(const std::uint8_t* bytes, std::size_t size);

// Encodes 8-bit RGB, filter 0 rows, zlib stream emitted as stored blocks so
// the byte output is identical across zlib versions.
std::vector<std::uint8_t> encode_png(const ImageRGB& img);

bool looks_like_png(const std::uint8_t* bytes, std::size_t size);

}  // namespace vigxray
