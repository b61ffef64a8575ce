#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vigxray {

inline constexpr int kGridSide = 14;
inline constexpr int kNumPatches = kGridSide * kGridSide;  // 196
inline constexpr int kPatchSide = 16;
inline constexpr int kModelImageSize = kGridSide * kPatchSide;  // 224
inline constexpr int kPatchVectorLen = kPatchSide * kPatchSide * 3;  // 768

// 8-bit RGB image, row-major, samples interleaved R,G,B.
struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageRGB() = default;
    ImageRGB(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

struct GridCoord {
    int row = 0;
    int col = 0;
};

// The 14x14 grid of 16x16 RGB patches tiling a 224x224 image.
// Patch i covers pixel rows [16*r, 16*r+16) and columns [16*c, 16*c+16)
// with r = i / 14, c = i % 14. Patch bytes are stored patch-major, each
// patch row-major with interleaved R,G,B.
struct PatchGrid {
    std::vector<std::uint8_t> patches;  // kNumPatches * kPatchVectorLen bytes

    static GridCoord coord_of(int patch_index) {
        return {patch_index / kGridSide, patch_index % kGridSide};
    }
    static int index_of(int row, int col) { return row * kGridSide + col; }

    const std::uint8_t* patch_bytes(int patch_index) const {
        return patches.data() + static_cast<std::size_t>(patch_index) * kPatchVectorLen;
    }
};

// Per-pixel binary mask (nonzero = object).
struct PixelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // width*height entries, 0 or 1
};

// Per-patch binary mask aligned with PatchGrid indexing.
struct PatchMask {
    std::array<std::uint8_t, kNumPatches> bits{};
};

// Decodes a PNG (8-bit gray/RGB/RGBA) or binary PPM/PGM file into RGB.
// Alpha is dropped, grayscale is expanded to three channels.
ImageRGB load_image(const std::string& path);

// Encodes to PNG (8-bit RGB) and writes to disk. Output bytes are
// deterministic for a given image.
void save_png(const ImageRGB& img, const std::string& path);

// Bilinear resampling with half-pixel-center sample positions.
ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h);

// Splits a 224x224 image into the 196-patch grid.
PatchGrid partition(const ImageRGB& img);

// Inverse of partition: tiles the patches back into a 224x224 image.
ImageRGB reassemble(const PatchGrid& grid);

// Row-major R,G,B interleaved patch samples scaled to [0,1] by /255.
std::vector<float> flatten_patch(const PatchGrid& grid, int patch_index);

// Reads a mask from a single-channel PNG/PPM image (nonzero pixel = object)
// or from a plaintext grid of whitespace-separated 0/1 tokens (row-major,
// 14x14 or 224x224).
PixelMask load_mask(const std::string& path);

// Reduces a 224x224 pixel mask to the patch grid: a patch is object iff the
// fraction of object pixels in its 16x16 footprint is >= threshold.
// A 14x14 input maps bitwise.
PatchMask downsample_mask(const PixelMask& mask, double threshold = 0.5);

}  // namespace vigxray
