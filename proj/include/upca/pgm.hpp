#pragma once

#include "upca/datagen.hpp"
#include "upca/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace upca::pgm {

/// Portable graymap, maxval 255. P2 (ASCII) and P5 (binary) are supported;
/// files we write round-trip bit-exactly.
struct Image {
    int width = 0;
    int height = 0;
    bool binary = true;  // written back in the format it was read in
    std::vector<std::uint8_t> pixels;  // row-major, height * width

    std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const {
        return pixels[static_cast<std::size_t>(row) * width + col];
    }
};

Image read_pgm(const std::string& path);
void write_pgm(const Image& image, const std::string& path);

/// Applies a permutation of patch indices: patches are super-coordinates of
/// size patch_w x patch_h tiling the image exactly.
Image apply_patch_permutation(const Image& image, int patch_w, int patch_h,
                              const datagen::Permutation& perm);

/// Draws an alpha-sparse permutation over the patch grid and applies it.
Image patch_permute(const Image& image, int patch_w, int patch_h, double alpha,
                    std::uint64_t seed);

int patch_count(const Image& image, int patch_w, int patch_h);

/// Column vector of pixels (row-major scan), values in [0, 255].
Vector image_to_column(const Image& image);

/// Rounds, clamps to [0, 255] and reshapes back into an image.
Image column_to_image(const Vector& column, int width, int height, bool binary = true);

}  // namespace upca::pgm
