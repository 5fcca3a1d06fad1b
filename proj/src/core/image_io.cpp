// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/core/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "matfuse/errors.hpp"

namespace matfuse {

namespace {

ImageRGB from_bgr(const cv::Mat& bgr8, std::optional<GridSize> size) {
    cv::Mat src = bgr8;
    if (size && (static_cast<std::size_t>(src.rows) != size->height || static_cast<std::size_t>(src.cols) != size->width)) {
        const bool shrink = static_cast<std::size_t>(src.rows) > size->height;
        cv::resize(bgr8, src, cv::Size(static_cast<int>(size->width), static_cast<int>(size->height)), 0, 0,
                   shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    }
    ImageRGB image(static_cast<std::size_t>(src.rows), static_cast<std::size_t>(src.cols));
    for (int y = 0; y < src.rows; ++y) {
        const auto* row = src.ptr<cv::Vec3b>(y);
        for (int x = 0; x < src.cols; ++x) {
            for (int c = 0; c < 3; ++c)
                image.at(y, x, c) = row[x][2 - c] / 255.0;
        }
    }
    return image;
}

cv::Mat to_bgr(const ImageRGB& image) {
    cv::Mat out(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8UC3);
    for (int y = 0; y < out.rows; ++y) {
        auto* row = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < out.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
                row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    return out;
}

BinaryMask from_gray(const cv::Mat& gray8, std::optional<GridSize> size, const std::string& origin) {
    cv::Mat src = gray8;
    if (size && (static_cast<std::size_t>(src.rows) != size->height || static_cast<std::size_t>(src.cols) != size->width))
        cv::resize(gray8, src, cv::Size(static_cast<int>(size->width), static_cast<int>(size->height)), 0, 0,
                   cv::INTER_NEAREST);
    std::vector<std::uint8_t> values(static_cast<std::size_t>(src.rows) * src.cols);
    bool graded = false;
    for (int y = 0; y < src.rows; ++y) {
        const auto* row = src.ptr<unsigned char>(y);
        for (int x = 0; x < src.cols; ++x) {
            const unsigned char v = row[x];
            if (v != 0 && v != 255)
                graded = true;
            values[static_cast<std::size_t>(y) * src.cols + x] = v >= 128 ? 1 : 0;
        }
    }
    if (graded)
        spdlog::warn("mask {} is not strictly binary; thresholded at 0.5", origin);
    return BinaryMask(static_cast<std::size_t>(src.rows), static_cast<std::size_t>(src.cols), std::move(values));
}

std::string encode(const cv::Mat& mat) {
    std::vector<unsigned char> buffer;
    if (!cv::imencode(".png", mat, buffer))
        throw IoError("PNG encoding failed");
    return std::string(buffer.begin(), buffer.end());
}

void write(const cv::Mat& mat, const std::filesystem::path& path) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat))
        throw IoError("cannot write image " + path.string());
}

cv::Mat decode_bytes(std::string_view bytes, int flags, const std::string& what) {
    cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
    cv::Mat decoded = bytes.empty() ? cv::Mat() : cv::imdecode(raw, flags);
    if (decoded.empty())
        throw IoError("cannot decode " + what);
    return decoded;
}

}  // namespace

ImageRGB load_image(const std::filesystem::path& path, std::optional<GridSize> size) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty())
        throw IoError("cannot decode image " + path.string());
    return from_bgr(bgr, size);
}

ImageRGB decode_image(std::string_view bytes, std::optional<GridSize> size) {
    return from_bgr(decode_bytes(bytes, cv::IMREAD_COLOR, "image payload"), size);
}

BinaryMask load_mask(const std::filesystem::path& path, std::optional<GridSize> size) {
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty())
        throw IoError("cannot decode mask " + path.string());
    return from_gray(gray, size, path.string());
}

BinaryMask decode_mask(std::string_view bytes, std::optional<GridSize> size) {
    return from_gray(decode_bytes(bytes, cv::IMREAD_GRAYSCALE, "mask payload"), size, "upload");
}

void save_image(const ImageRGB& image, const std::filesystem::path& path) { write(to_bgr(image), path); }

void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    cv::Mat out(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x)
            out.at<unsigned char>(y, x) = mask.at(y, x) ? 255 : 0;
    write(out, path);
}

std::string encode_png(const ImageRGB& image) { return encode(to_bgr(image)); }

std::string encode_png(const BinaryMask& mask) {
    cv::Mat out(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x)
            out.at<unsigned char>(y, x) = mask.at(y, x) ? 255 : 0;
    return encode(out);
}

ImageRGB resize_image(const ImageRGB& image, GridSize size) {
    if (image.height() == size.height && image.width() == size.width)
        return image;
    cv::Mat src(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_64FC3,
                const_cast<double*>(image.pixels().data()));
    cv::Mat dst;
    const bool shrink = image.height() > size.height;
    cv::resize(src, dst, cv::Size(static_cast<int>(size.width), static_cast<int>(size.height)), 0, 0,
               shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    cv::Mat flat = dst.reshape(1, 1);
    std::vector<double> pixels(flat.begin<double>(), flat.end<double>());
    for (double& v : pixels)
        v = std::clamp(v, 0.0, 1.0);
    return ImageRGB(size.height, size.width, std::move(pixels));
}

ImageRGB hconcat(const std::vector<ImageRGB>& images) {
    if (images.empty())
        throw ValidationError("images", "nothing to concatenate");
    const std::size_t height = images.front().height();
    std::size_t width = 0;
    for (const auto& img : images) {
        if (img.height() != height)
            throw ShapeError("hconcat: heights differ");
        width += img.width();
    }
    ImageRGB out(height, width);
    std::size_t offset = 0;
    for (const auto& img : images) {
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < img.width(); ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    out.at(y, offset + x, c) = img.at(y, x, c);
        offset += img.width();
    }
    return out;
}

}  // namespace matfuse
