#include "endoseg/image_io.hpp"

#include "endoseg/error.hpp"
#include "endoseg/file_util.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <png.h>

#include <cstring>

namespace endoseg {

namespace {

cv::Mat to_mat(const RgbImage& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    std::memcpy(m.data, img.pixels.data(), img.pixels.size());
    return m;
}

RgbImage from_mat(const cv::Mat& m) {
    RgbImage img;
    img.height = m.rows;
    img.width = m.cols;
    img.pixels.resize(static_cast<std::size_t>(m.rows) * m.cols * 3);
    const cv::Mat c = m.isContinuous() ? m : m.clone();
    std::memcpy(img.pixels.data(), c.data, img.pixels.size());
    return img;
}

// libpng error handling: convert longjmp-based failures into exceptions at the call site.
struct PngWriteBuffer {
    std::vector<std::uint8_t> bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
    buf->bytes.insert(buf->bytes.end(), data, data + len);
}

void png_flush_cb(png_structp) {}

struct PngReadBuffer {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
    auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
    if (buf->pos + len > buf->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(out, buf->bytes.data() + buf->pos, len);
    buf->pos += len;
}

std::vector<std::uint8_t> encode_png(int width, int height, int color_type, int channels,
                                     std::span<const std::uint8_t> rows, bool with_palette) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng: cannot create info struct");
    }
    PngWriteBuffer out;
    std::vector<png_color> palette;
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng: encoding failed");
    }
    png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (with_palette) {
        palette.resize(256);
        for (int i = 0; i < 256; ++i) {
            const auto c = palette_color(i);
            palette[static_cast<std::size_t>(i)] = png_color{c[0], c[1], c[2]};
        }
        png_set_PLTE(png, info, palette.data(), 256);
    }
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int r = 0; r < height; ++r) {
        row_ptrs[static_cast<std::size_t>(r)] = const_cast<png_bytep>(rows.data() + stride * r);
    }
    png_set_rows(png, info, row_ptrs.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    return std::move(out.bytes);
}

}  // namespace

RgbImage load_rgb(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("image not found: " + path.string());
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot decode image " + path.string());
    if (bgr.depth() != CV_8U) throw DataError("image " + path.string() + " is not 8-bit");
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return from_mat(rgb);
}

BinaryMask load_binary_mask(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("mask not found: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot decode mask " + path.string());
    BinaryMask mask(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const auto* row = m.ptr<std::uint8_t>(r);
        for (int c = 0; c < m.cols; ++c) mask.at(r, c) = row[c] > 0 ? 1 : 0;
    }
    return mask;
}

RgbImage preprocess(const RgbImage& image, const PreprocessConfig& cfg) {
    cv::Mat m = to_mat(image);
    if (cfg.resize_to && (cfg.resize_to->first != image.width || cfg.resize_to->second != image.height)) {
        cv::Mat resized;
        cv::resize(m, resized, cv::Size(cfg.resize_to->first, cfg.resize_to->second), 0, 0, cv::INTER_AREA);
        m = resized;
    }
    if (cfg.clahe) {
        cv::Mat lab;
        cv::cvtColor(m, lab, cv::COLOR_RGB2Lab);
        std::vector<cv::Mat> channels;
        cv::split(lab, channels);
        auto clahe = cv::createCLAHE(cfg.clahe_clip, cv::Size(cfg.clahe_tiles, cfg.clahe_tiles));
        clahe->apply(channels[0], channels[0]);
        cv::merge(channels, lab);
        cv::cvtColor(lab, m, cv::COLOR_Lab2RGB);
    }
    return from_mat(m);
}

RgbImage downsample_to_grid(const RgbImage& image, int grid_h, int grid_w) {
    if (image.height == grid_h && image.width == grid_w) return image;
    cv::Mat small;
    cv::resize(to_mat(image), small, cv::Size(grid_w, grid_h), 0, 0, cv::INTER_AREA);
    return from_mat(small);
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int height, int width) {
    if (mask.height == height && mask.width == width) return mask;
    BinaryMask out(height, width);
    for (int r = 0; r < height; ++r) {
        const int sr = std::min(mask.height - 1, static_cast<int>((r + 0.5) * mask.height / height));
        for (int c = 0; c < width; ++c) {
            const int sc = std::min(mask.width - 1, static_cast<int>((c + 0.5) * mask.width / width));
            out.at(r, c) = mask.at(sr, sc);
        }
    }
    return out;
}

BinaryMask mask_to_grid(const BinaryMask& pixel_mask, int grid_h, int grid_w) {
    BinaryMask grid(grid_h, grid_w);
    for (int gr = 0; gr < grid_h; ++gr) {
        const int r0 = gr * pixel_mask.height / grid_h;
        const int r1 = (gr + 1) * pixel_mask.height / grid_h;
        for (int gc = 0; gc < grid_w; ++gc) {
            const int c0 = gc * pixel_mask.width / grid_w;
            const int c1 = (gc + 1) * pixel_mask.width / grid_w;
            std::size_t on = 0;
            std::size_t total = 0;
            for (int r = r0; r < r1; ++r) {
                for (int c = c0; c < c1; ++c) {
                    on += pixel_mask.at(r, c) ? 1 : 0;
                    ++total;
                }
            }
            grid.at(gr, gc) = (total > 0 && 2 * on >= total) ? 1 : 0;
        }
    }
    return grid;
}

std::array<std::uint8_t, 3> palette_color(int id) {
    // Index 0 is black (background); then a 20-color qualitative cycle.
    static constexpr std::uint8_t table[20][3] = {
        {31, 119, 180},  {255, 127, 14}, {44, 160, 44},   {214, 39, 40},   {148, 103, 189},
        {140, 86, 75},   {227, 119, 194}, {127, 127, 127}, {188, 189, 34},  {23, 190, 207},
        {174, 199, 232}, {255, 187, 120}, {152, 223, 138}, {255, 152, 150}, {197, 176, 213},
        {196, 156, 148}, {247, 182, 210}, {199, 199, 199}, {219, 219, 141}, {158, 218, 229}};
    if (id <= 0) return {0, 0, 0};
    const auto& c = table[(id - 1) % 20];
    return {c[0], c[1], c[2]};
}

std::vector<std::uint8_t> encode_palette_png(const SemanticMask& mask) {
    if (mask.labels.size() != static_cast<std::size_t>(mask.height) * mask.width || mask.height < 1 ||
        mask.width < 1) {
        throw DataError("semantic mask " + mask.image_id + ": inconsistent size");
    }
    return encode_png(mask.width, mask.height, PNG_COLOR_TYPE_PALETTE, 1, mask.labels, true);
}

SemanticMask decode_palette_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw DataError("not a PNG stream");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng: cannot create info struct");
    }
    PngReadBuffer in{bytes, 0};
    SemanticMask mask;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng: decoding failed");
    }
    png_set_read_fn(png, &in, png_read_cb);
    png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const auto type = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (type != PNG_COLOR_TYPE_PALETTE || depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("expected an 8-bit palette PNG");
    }
    mask.width = static_cast<int>(w);
    mask.height = static_cast<int>(h);
    mask.labels.resize(static_cast<std::size_t>(w) * h);
    png_bytepp rows = png_get_rows(png, info);
    for (png_uint_32 r = 0; r < h; ++r) std::memcpy(mask.labels.data() + r * w, rows[r], w);
    png_destroy_read_struct(&png, &info, nullptr);
    return mask;
}

std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image) {
    return encode_png(image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.pixels, false);
}

std::vector<std::uint8_t> encode_gray_png(const BinaryMask& mask) {
    std::vector<std::uint8_t> rows(mask.data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = mask.data[i] ? 255 : 0;
    return encode_png(mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 1, rows, false);
}

void save_rgb_png(const fs::path& path, const RgbImage& image) { write_file_atomic(path, encode_rgb_png(image)); }

void save_binary_mask_png(const fs::path& path, const BinaryMask& mask) {
    write_file_atomic(path, encode_gray_png(mask));
}

}  // namespace endoseg
