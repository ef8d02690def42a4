#include "jumpcut/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace jcut {

Image read_png(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("failed to read image: " + path);
    Image out(bgr.cols, bgr.rows);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(0, x, y) = row[x][2] / 255.f;
            out.at(1, x, y) = row[x][1] / 255.f;
            out.at(2, x, y) = row[x][0] / 255.f;
        }
    }
    return out;
}

void write_png(const std::string& path, const Image& img) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            auto q = [&](int c) {
                float v = img.at(c, x, y);
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                return static_cast<uint8_t>(v * 255.f + 0.5f);
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, bgr)) throw IoError("failed to write image: " + path);
}

Image resize_image(const Image& img, int width, int height) {
    if (width == img.width && height == img.height) return img;
    cv::Mat src(img.height, img.width, CV_32FC3);
    for (int y = 0; y < img.height; ++y) {
        cv::Vec3f* row = src.ptr<cv::Vec3f>(y);
        for (int x = 0; x < img.width; ++x)
            row[x] = cv::Vec3f(img.at(0, x, y), img.at(1, x, y), img.at(2, x, y));
    }
    cv::Mat dst;
    const int interp = (width < img.width || height < img.height) ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, interp);
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const cv::Vec3f* row = dst.ptr<cv::Vec3f>(y);
        for (int x = 0; x < width; ++x) {
            out.at(0, x, y) = row[x][0];
            out.at(1, x, y) = row[x][1];
            out.at(2, x, y) = row[x][2];
        }
    }
    return out;
}

}  // namespace jcut
