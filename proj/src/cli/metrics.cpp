#include "pdeo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pdeo {

double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw UsageError("psnr: image dimensions differ");
    double sum = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        for (int c = 0; c < 3; ++c) {
            const double d = std::clamp(a.pixels[p][c], 0.0, 1.0) - std::clamp(b.pixels[p][c], 0.0, 1.0);
            sum += d * d;
        }
    }
    const double mse = a.size() == 0 ? 0.0 : sum / (3.0 * static_cast<double>(a.size()));
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel(int size) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double mid = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - mid;
        k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable valid-region filter of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k, int& ow,
                                 int& oh) {
    const int ks = static_cast<int>(k.size());
    ow = w - ks + 1;
    oh = h - ks + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < ks; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < ks; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw UsageError("ssim: image dimensions differ");
    const int w = a.width;
    const int h = a.height;
    if (w == 0 || h == 0) return 1.0;
    const int win = std::min({kWindow, w, h});
    const auto k = gaussian_kernel(win);
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const std::size_t n = a.size();
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = a.pixels[p][c];
            y[p] = b.pixels[p][c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        int ow = 0, oh = 0;
        const auto mx = filter_valid(x, w, h, k, ow, oh);
        const auto my = filter_valid(y, w, h, k, ow, oh);
        const auto sxx = filter_valid(xx, w, h, k, ow, oh);
        const auto syy = filter_valid(yy, w, h, k, ow, oh);
        const auto sxy = filter_valid(xy, w, h, k, ow, oh);
        double acc = 0.0;
        for (std::size_t p = 0; p < mx.size(); ++p) {
            const double vx = sxx[p] - mx[p] * mx[p];
            const double vy = syy[p] - my[p] * my[p];
            const double cov = sxy[p] - mx[p] * my[p];
            acc += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2)) /
                   ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / 3.0;
}

}  // namespace pdeo
