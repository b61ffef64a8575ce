#include "vigxray/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vigxray/error.hpp"
#include "vigxray/png.hpp"

namespace vigxray {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorKind::Io, "read failed for " + path);
    return bytes;
}

// Binary PPM (P6) / PGM (P5), 8-bit. Header tokens may be separated by
// whitespace and '#' comments.
ImageRGB decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw Error(ErrorKind::CorruptStream, "bad PNM header in " + path);
        return v;
    };

    bool color = bytes[1] == '6';
    long w = next_token();
    long h = next_token();
    long maxval = next_token();
    if (w < 1 || h < 1) throw Error(ErrorKind::CorruptStream, "bad PNM dimensions in " + path);
    if (maxval != 255) {
        throw Error(ErrorKind::UnsupportedFormat, "only maxval 255 PNM supported: " + path);
    }
    ++pos;  // single whitespace byte after maxval

    std::size_t channels = color ? 3 : 1;
    std::size_t need = std::size_t(w) * h * channels;
    if (bytes.size() - pos < need) {
        throw Error(ErrorKind::CorruptStream, "truncated PNM pixel data in " + path);
    }

    ImageRGB img{int(w), int(h)};
    const std::uint8_t* src = bytes.data() + pos;
    if (color) {
        std::memcpy(img.data.data(), src, need);
    } else {
        for (std::size_t i = 0; i < std::size_t(w) * h; ++i) {
            img.data[i * 3] = img.data[i * 3 + 1] = img.data[i * 3 + 2] = src[i];
        }
    }
    return img;
}

}  // namespace

ImageRGB load_image(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    if (looks_like_png(bytes.data(), bytes.size())) {
        return decode_png(bytes.data(), bytes.size());
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
        return decode_pnm(bytes, path);
    }
    throw Error(ErrorKind::UnsupportedFormat, "unrecognized image format: " + path);
}

void save_png(const ImageRGB& img, const std::string& path) {
    std::vector<std::uint8_t> bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw Error(ErrorKind::InvalidArgument, "resize target must be >= 1x1");
    }
    if (img.width < 1 || img.height < 1) {
        throw Error(ErrorKind::InvalidArgument, "resize source must be >= 1x1");
    }
    ImageRGB out(out_w, out_h);
    double sx = double(img.width) / out_w;
    double sy = double(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(img.height - 1));
        int y0 = int(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(img.width - 1));
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
                double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
                double v = (1.0 - wy) * top + wy * bot;
                out.at(x, y, c) = std::uint8_t(std::lround(v));
            }
        }
    }
    return out;
}

PatchGrid partition(const ImageRGB& img) {
    if (img.width != kModelImageSize || img.height != kModelImageSize) {
        throw Error(ErrorKind::InvalidArgument, "partition expects a 224x224 image, got " +
                                                    std::to_string(img.width) + "x" +
                                                    std::to_string(img.height));
    }
    PatchGrid grid;
    grid.patches.resize(std::size_t(kNumPatches) * kPatchVectorLen);
    for (int i = 0; i < kNumPatches; ++i) {
        GridCoord rc = PatchGrid::coord_of(i);
        std::uint8_t* dst = grid.patches.data() + std::size_t(i) * kPatchVectorLen;
        for (int py = 0; py < kPatchSide; ++py) {
            const std::uint8_t* src =
                img.data.data() +
                ((std::size_t(rc.row) * kPatchSide + py) * kModelImageSize +
                 std::size_t(rc.col) * kPatchSide) *
                    3;
            std::memcpy(dst + std::size_t(py) * kPatchSide * 3, src, std::size_t(kPatchSide) * 3);
        }
    }
    return grid;
}

ImageRGB reassemble(const PatchGrid& grid) {
    if (grid.patches.size() != std::size_t(kNumPatches) * kPatchVectorLen) {
        throw Error(ErrorKind::InvalidArgument, "reassemble: grid has wrong patch payload size");
    }
    ImageRGB img(kModelImageSize, kModelImageSize);
    for (int i = 0; i < kNumPatches; ++i) {
        GridCoord rc = PatchGrid::coord_of(i);
        const std::uint8_t* src = grid.patch_bytes(i);
        for (int py = 0; py < kPatchSide; ++py) {
            std::uint8_t* dst =
                img.data.data() +
                ((std::size_t(rc.row) * kPatchSide + py) * kModelImageSize +
                 std::size_t(rc.col) * kPatchSide) *
                    3;
            std::memcpy(dst, src + std::size_t(py) * kPatchSide * 3, std::size_t(kPatchSide) * 3);
        }
    }
    return img;
}

std::vector<float> flatten_patch(const PatchGrid& grid, int patch_index) {
    if (patch_index < 0 || patch_index >= kNumPatches) {
        throw Error(ErrorKind::InvalidArgument,
                    "patch index out of range: " + std::to_string(patch_index));
    }
    const std::uint8_t* src = grid.patch_bytes(patch_index);
    std::vector<float> v(kPatchVectorLen);
    for (int i = 0; i < kPatchVectorLen; ++i) v[i] = float(src[i]) / 255.0f;
    return v;
}

PixelMask load_mask(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);

    bool binary_image = looks_like_png(bytes.data(), bytes.size()) ||
                        (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'));
    if (binary_image) {
        ImageRGB img = load_image(path);
        PixelMask mask;
        mask.width = img.width;
        mask.height = img.height;
        mask.bits.resize(std::size_t(img.width) * img.height);
        for (std::size_t i = 0; i < mask.bits.size(); ++i) {
            const std::uint8_t* px = img.data.data() + i * 3;
            mask.bits[i] = (px[0] | px[1] | px[2]) != 0 ? 1 : 0;
        }
        return mask;
    }

    // Plaintext grid of 0/1 tokens, row-major, 14x14 or 224x224.
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::vector<std::uint8_t> tokens;
    std::string tok;
    while (in >> tok) {
        if (tok == "0") {
            tokens.push_back(0);
        } else if (tok == "1") {
            tokens.push_back(1);
        } else {
            throw Error(ErrorKind::CorruptStream,
                        "mask token must be 0 or 1, got '" + tok + "' in " + path);
        }
    }
    PixelMask mask;
    if (tokens.size() == std::size_t(kGridSide) * kGridSide) {
        mask.width = mask.height = kGridSide;
    } else if (tokens.size() == std::size_t(kModelImageSize) * kModelImageSize) {
        mask.width = mask.height = kModelImageSize;
    } else {
        throw Error(ErrorKind::UnsupportedFormat,
                    "text mask must have 196 or 50176 tokens, got " +
                        std::to_string(tokens.size()) + " in " + path);
    }
    mask.bits = std::move(tokens);
    return mask;
}

PatchMask downsample_mask(const PixelMask& mask, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw Error(ErrorKind::InvalidArgument, "mask threshold must be in [0,1]");
    }
    PatchMask out;
    if (mask.width == kGridSide && mask.height == kGridSide) {
        for (int i = 0; i < kNumPatches; ++i) out.bits[i] = mask.bits[i] ? 1 : 0;
        return out;
    }
    if (mask.width != kModelImageSize || mask.height != kModelImageSize) {
        throw Error(ErrorKind::ShapeMismatch, "mask must be 224x224 or 14x14, got " +
                                                  std::to_string(mask.width) + "x" +
                                                  std::to_string(mask.height));
    }
    for (int i = 0; i < kNumPatches; ++i) {
        GridCoord rc = PatchGrid::coord_of(i);
        int count = 0;
        for (int py = 0; py < kPatchSide; ++py) {
            const std::uint8_t* row = mask.bits.data() +
                                      (std::size_t(rc.row) * kPatchSide + py) * kModelImageSize +
                                      std::size_t(rc.col) * kPatchSide;
            for (int px = 0; px < kPatchSide; ++px) count += row[px] ? 1 : 0;
        }
        double fraction = double(count) / (kPatchSide * kPatchSide);
        out.bits[i] = fraction >= threshold ? 1 : 0;
    }
    return out;
}

}  // namespace vigxray
