#include "vigxray/png.hpp"

#include <zlib.h>

#include <cstring>
#include <string>

#include "vigxray/error.hpp"

namespace vigxray {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a);
    int pb = std::abs(p - b);
    int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& in, std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error(ErrorKind::CorruptStream, "zlib init failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    std::size_t produced = out.size() - zs.avail_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected) {
        throw Error(ErrorKind::CorruptStream, "PNG image data stream is invalid or truncated");
    }
    return out;
}

}  // namespace

bool looks_like_png(const std::uint8_t* bytes, std::size_t size) {
    return size >= 8 && std::memcmp(bytes, kPngSignature, 8) == 0;
}

ImageRGB decode_png(const std::uint8_t* bytes, std::size_t size) {
    if (!looks_like_png(bytes, size)) {
        throw Error(ErrorKind::UnsupportedFormat, "not a PNG file");
    }

    std::uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    bool seen_ihdr = false, seen_iend = false;
    std::vector<std::uint8_t> idat;

    std::size_t pos = 8;
    while (!seen_iend) {
        if (pos + 8 > size) throw Error(ErrorKind::CorruptStream, "truncated PNG chunk header");
        std::uint32_t len = read_be32(bytes + pos);
        const std::uint8_t* type = bytes + pos + 4;
        if (pos + 12 + std::size_t(len) > size) {
            throw Error(ErrorKind::CorruptStream, "truncated PNG chunk payload");
        }
        const std::uint8_t* payload = bytes + pos + 8;
        std::uint32_t stored_crc = read_be32(payload + len);
        std::uint32_t actual_crc =
            crc32(crc32(0, type, 4), payload, len);
        if (stored_crc != actual_crc) {
            throw Error(ErrorKind::CorruptStream, "PNG chunk CRC mismatch");
        }

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw Error(ErrorKind::CorruptStream, "bad IHDR length");
            width = read_be32(payload);
            height = read_be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            int interlace = payload[12];
            if (width == 0 || height == 0) {
                throw Error(ErrorKind::CorruptStream, "zero PNG dimensions");
            }
            if (bit_depth != 8) {
                throw Error(ErrorKind::UnsupportedFormat,
                            "only 8-bit PNG supported, got depth " + std::to_string(bit_depth));
            }
            if (color_type != 0 && color_type != 2 && color_type != 6) {
                throw Error(ErrorKind::UnsupportedFormat,
                            "only gray/RGB/RGBA PNG supported, got color type " +
                                std::to_string(color_type));
            }
            if (interlace != 0) {
                throw Error(ErrorKind::UnsupportedFormat, "interlaced PNG not supported");
            }
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!seen_ihdr) throw Error(ErrorKind::CorruptStream, "IDAT before IHDR");
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        // Ancillary chunks are skipped.
        pos += 12 + std::size_t(len);
    }
    if (!seen_ihdr || idat.empty()) {
        throw Error(ErrorKind::CorruptStream, "PNG missing IHDR or IDAT");
    }

    int channels = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    std::size_t stride = std::size_t(width) * channels;
    std::vector<std::uint8_t> raw = inflate_all(idat, (stride + 1) * height);

    // Undo per-row filters in place, then expand to RGB.
    std::vector<std::uint8_t> prev(stride, 0);
    ImageRGB img{int(width), int(height)};
    for (std::uint32_t y = 0; y < height; ++y) {
        std::uint8_t filter = raw[(stride + 1) * y];
        std::uint8_t* row = raw.data() + (stride + 1) * y + 1;
        switch (filter) {
            case 0:
                break;
            case 1:
                for (std::size_t i = channels; i < stride; ++i) row[i] += row[i - channels];
                break;
            case 2:
                for (std::size_t i = 0; i < stride; ++i) row[i] += prev[i];
                break;
            case 3:
                for (std::size_t i = 0; i < stride; ++i) {
                    int left = i >= std::size_t(channels) ? row[i - channels] : 0;
                    row[i] += std::uint8_t((left + prev[i]) / 2);
                }
                break;
            case 4:
                for (std::size_t i = 0; i < stride; ++i) {
                    int left = i >= std::size_t(channels) ? row[i - channels] : 0;
                    int upleft = i >= std::size_t(channels) ? prev[i - channels] : 0;
                    row[i] += std::uint8_t(paeth(left, prev[i], upleft));
                }
                break;
            default:
                throw Error(ErrorKind::CorruptStream,
                            "bad PNG filter byte " + std::to_string(filter));
        }
        std::memcpy(prev.data(), row, stride);

        std::uint8_t* dst = img.data.data() + std::size_t(y) * width * 3;
        if (channels == 1) {
            for (std::uint32_t x = 0; x < width; ++x) {
                dst[x * 3] = dst[x * 3 + 1] = dst[x * 3 + 2] = row[x];
            }
        } else if (channels == 3) {
            std::memcpy(dst, row, stride);
        } else {
            for (std::uint32_t x = 0; x < width; ++x) {
                dst[x * 3] = row[x * 4];
                dst[x * 3 + 1] = row[x * 4 + 1];
                dst[x * 3 + 2] = row[x * 4 + 2];
            }
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageRGB& img) {
    if (img.width < 1 || img.height < 1 ||
        img.data.size() != std::size_t(img.width) * img.height * 3) {
        throw Error(ErrorKind::InvalidArgument, "encode_png: inconsistent image");
    }

    std::size_t stride = std::size_t(img.width) * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = img.data.data() + std::size_t(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    // zlib stream with stored deflate blocks: byte-stable across zlib builds.
    std::vector<std::uint8_t> zdata;
    zdata.push_back(0x78);
    zdata.push_back(0x01);
    std::size_t off = 0;
    while (off < raw.size()) {
        std::size_t block = std::min<std::size_t>(65535, raw.size() - off);
        bool final = off + block == raw.size();
        zdata.push_back(final ? 1 : 0);
        zdata.push_back(std::uint8_t(block & 0xFF));
        zdata.push_back(std::uint8_t(block >> 8));
        zdata.push_back(std::uint8_t(~block & 0xFF));
        zdata.push_back(std::uint8_t((~block >> 8) & 0xFF));
        zdata.insert(zdata.end(), raw.begin() + off, raw.begin() + off + block);
        off += block;
    }
    std::uint32_t adler = adler32(adler32(0, nullptr, 0), raw.data(), uInt(raw.size()));
    write_be32(zdata, adler);

    std::vector<std::uint8_t> out(kPngSignature, kPngSignature + 8);
    auto put_chunk = [&out](const char* type, const std::vector<std::uint8_t>& payload) {
        write_be32(out, std::uint32_t(payload.size()));
        std::size_t type_pos = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        std::uint32_t crc = crc32(0, out.data() + type_pos, uInt(4 + payload.size()));
        write_be32(out, crc);
    };

    std::vector<std::uint8_t> ihdr;
    write_be32(ihdr, std::uint32_t(img.width));
    write_be32(ihdr, std::uint32_t(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    put_chunk("IHDR", ihdr);
    put_chunk("IDAT", zdata);
    put_chunk("IEND", {});
    return out;
}

}  // namespace vigxray
