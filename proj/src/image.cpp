// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace vrsplat {

double image_mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("image_mse: shape mismatch (" + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()) + ")");
    }
    const auto& da = a.data();
    const auto& db = b.data();
    double acc = 0.0;
    for (size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        acc += d * d;
    }
    return da.empty() ? 0.0 : acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
    const double mse = image_mse(a, b);
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Image& image) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw IoError("write_png: cannot open " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(image.width()) * 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            row[x * 3 + 0] = quantize(image.at(y, x, 0));
            row[x * 3 + 1] = quantize(image.at(y, x, 1));
            row[x * 3 + 2] = quantize(image.at(y, x, 2));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void write_raw(const std::string& path, const Image& image) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw IoError("write_raw: cannot open " + path);
    }
    const char magic[4] = {'V', 'R', 'I', 'M'};
    const uint32_t h = static_cast<uint32_t>(image.height());
    const uint32_t w = static_cast<uint32_t>(image.width());
    const uint32_t c = 3;
    std::fwrite(magic, 1, 4, fp);
    std::fwrite(&h, 4, 1, fp);
    std::fwrite(&w, 4, 1, fp);
    std::fwrite(&c, 4, 1, fp);
    std::vector<float> buf(image.data().size());
    for (size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<float>(image.data()[i]);
    }
    std::fwrite(buf.data(), sizeof(float), buf.size(), fp);
    std::fclose(fp);
}

Image read_raw(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) {
        throw IoError("read_raw: cannot open " + path);
    }
    char magic[4];
    uint32_t h = 0, w = 0, c = 0;
    if (std::fread(magic, 1, 4, fp) != 4 || std::memcmp(magic, "VRIM", 4) != 0 ||
        std::fread(&h, 4, 1, fp) != 1 || std::fread(&w, 4, 1, fp) != 1 ||
        std::fread(&c, 4, 1, fp) != 1 || c != 3) {
        std::fclose(fp);
        throw IoError("read_raw: bad header in " + path);
    }
    Image image(static_cast<int>(h), static_cast<int>(w));
    std::vector<float> buf(image.data().size());
    if (std::fread(buf.data(), sizeof(float), buf.size(), fp) != buf.size()) {
        std::fclose(fp);
        throw IoError("read_raw: truncated file " + path);
    }
    std::fclose(fp);
    for (size_t i = 0; i < buf.size(); ++i) {
        image.data()[i] = buf[i];
    }
    return image;
}

}  // namespace vrsplat
