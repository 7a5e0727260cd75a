#include "upca/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace upca::pgm {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::runtime_error(path + ": " + why);
}

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in) {
    std::string token;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(char(ch));
    }
    return token;
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");

    const std::string magic = next_token(in);
    Image image;
    if (magic == "P2")
        image.binary = false;
    else if (magic == "P5")
        image.binary = true;
    else
        fail(path, "not a P2/P5 portable graymap (magic '" + magic + "')");

    try {
        image.width = std::stoi(next_token(in));
        image.height = std::stoi(next_token(in));
        const int maxval = std::stoi(next_token(in));
        if (maxval != 255) fail(path, "maxval must be 255");
    } catch (const std::invalid_argument&) {
        fail(path, "malformed header");
    }
    if (image.width < 1 || image.height < 1) fail(path, "non-positive dimensions");

    const std::size_t count = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height);
    image.pixels.resize(count);
    if (image.binary) {
        // Exactly one whitespace byte separates the header from the raster.
        in.read(reinterpret_cast<char*>(image.pixels.data()),
                std::streamsize(count));
        if (static_cast<std::size_t>(in.gcount()) != count) fail(path, "truncated raster");
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string token = next_token(in);
            if (token.empty()) fail(path, "truncated raster");
            int value;
            try {
                value = std::stoi(token);
            } catch (const std::invalid_argument&) {
                fail(path, "non-numeric pixel '" + token + "'");
            }
            if (value < 0 || value > 255) fail(path, "pixel out of range");
            image.pixels[i] = std::uint8_t(value);
        }
    }
    return image;
}

void write_pgm(const Image& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << (image.binary ? "P5" : "P2") << '\n'
        << image.width << ' ' << image.height << '\n'
        << "255" << '\n';
    if (image.binary) {
        out.write(reinterpret_cast<const char*>(image.pixels.data()),
                  std::streamsize(image.pixels.size()));
    } else {
        for (int row = 0; row < image.height; ++row) {
            for (int col = 0; col < image.width; ++col) {
                if (col) out << ' ';
                out << int(image.at(row, col));
            }
            out << '\n';
        }
    }
    if (!out) fail(path, "write failed");
}

int patch_count(const Image& image, int patch_w, int patch_h) {
    if (patch_w < 1 || patch_h < 1)
        throw std::invalid_argument("patch dimensions must be positive");
    if (image.width % patch_w != 0 || image.height % patch_h != 0)
        throw std::invalid_argument("image dimensions not divisible by patch size");
    return (image.width / patch_w) * (image.height / patch_h);
}

Image apply_patch_permutation(const Image& image, int patch_w, int patch_h,
                              const datagen::Permutation& perm) {
    const int patches = patch_count(image, patch_w, patch_h);
    if (perm.size() != patches)
        throw std::invalid_argument("permutation size != patch count");
    const int grid_w = image.width / patch_w;

    Image out = image;
    for (int p = 0; p < patches; ++p) {
        const int q = perm.image[static_cast<std::size_t>(p)];  // patch p moves to slot q
        const int src_row = (p / grid_w) * patch_h;
        const int src_col = (p % grid_w) * patch_w;
        const int dst_row = (q / grid_w) * patch_h;
        const int dst_col = (q % grid_w) * patch_w;
        for (int dr = 0; dr < patch_h; ++dr)
            for (int dc = 0; dc < patch_w; ++dc)
                out.at(dst_row + dr, dst_col + dc) = image.at(src_row + dr, src_col + dc);
    }
    return out;
}

Image patch_permute(const Image& image, int patch_w, int patch_h, double alpha,
                    std::uint64_t seed) {
    const int patches = patch_count(image, patch_w, patch_h);
    const auto perm = datagen::sample_sparse_permutation(patches, alpha, seed);
    return apply_patch_permutation(image, patch_w, patch_h, perm);
}

Vector image_to_column(const Image& image) {
    Vector column(Index(image.pixels.size()));
    for (Index i = 0; i < column.size(); ++i) column[i] = double(image.pixels[static_cast<std::size_t>(i)]);
    return column;
}

Image column_to_image(const Vector& column, int width, int height, bool binary) {
    if (column.size() != Index(width) * Index(height))
        throw std::invalid_argument("column_to_image: size mismatch");
    Image image;
    image.width = width;
    image.height = height;
    image.binary = binary;
    image.pixels.resize(static_cast<std::size_t>(column.size()));
    for (Index i = 0; i < column.size(); ++i) {
        const double value = std::clamp(std::round(column[i]), 0.0, 255.0);
        image.pixels[static_cast<std::size_t>(i)] = std::uint8_t(value);
    }
    return image;
}

}  // namespace upca::pgm
