#include "supcon/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace supcon {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kLumaR = 0.299f, kLumaG = 0.587f, kLumaB = 0.114f;  // ITU-R BT.601

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

void clamp_image(Image& img) {
    for (float& v : img.data) v = clamp01(v);
}

float luma(float r, float g, float b) { return kLumaR * r + kLumaG * g + kLumaB * b; }

// Bilinear sample with zero fill outside the image.
float sample_zero(const Image& img, int c, double y, double x) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    float acc = 0.0f;
    for (int dy = 0; dy <= 1; ++dy) {
        const int yy = y0 + dy;
        if (yy < 0 || yy >= img.height) continue;
        const double wy = dy ? fy : 1.0 - fy;
        for (int dx = 0; dx <= 1; ++dx) {
            const int xx = x0 + dx;
            if (xx < 0 || xx >= img.width) continue;
            const double wx = dx ? fx : 1.0 - fx;
            acc += static_cast<float>(wy * wx) * img.at(c, yy, xx);
        }
    }
    return acc;
}

// Bilinear sample with edge clamping (used by resize).
float sample_clamped(const Image& img, int c, double y, double x) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    float acc = 0.0f;
    for (int dy = 0; dy <= 1; ++dy) {
        const int yy = std::clamp(y0 + dy, 0, img.height - 1);
        const double wy = dy ? fy : 1.0 - fy;
        for (int dx = 0; dx <= 1; ++dx) {
            const int xx = std::clamp(x0 + dx, 0, img.width - 1);
            const double wx = dx ? fx : 1.0 - fx;
            acc += static_cast<float>(wy * wx) * img.at(c, yy, xx);
        }
    }
    return acc;
}

// Inverse affine about the image center: output (x,y) samples input at
// (a*dx + b*dy + tx, c*dx + d*dy + ty) + center.
Image affine(const Image& img, double a, double b, double c, double d, double tx, double ty) {
    Image out(img.height, img.width);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y < img.height; ++y) {
            const double dy = y - cy;
            for (int x = 0; x < img.width; ++x) {
                const double dx = x - cx;
                const double sx = a * dx + b * dy + tx + cx;
                const double sy = c * dx + d * dy + ty + cy;
                out.at(ch, y, x) = sample_zero(img, ch, sy, sx);
            }
        }
    }
    clamp_image(out);
    return out;
}

Image blend_toward(const Image& base, const Image& target, double factor) {
    // factor 0 -> base, 1 -> target, >1 extrapolates past the target.
    Image out(target.height, target.width);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] =
            static_cast<float>(base.data[i] + factor * (target.data[i] - base.data[i]));
    }
    clamp_image(out);
    return out;
}

Image autocontrast_impl(const Image& img) {
    Image out = img;
    for (int c = 0; c < 3; ++c) {
        float lo = 1.0f, hi = 0.0f;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const float v = img.at(c, y, x);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (hi <= lo) continue;
        const float s = 1.0f / (hi - lo);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(c, y, x) = (img.at(c, y, x) - lo) * s;
    }
    clamp_image(out);
    return out;
}

// Classic 256-bin histogram equalization, per channel.
Image equalize_impl(const Image& img) {
    Image out = img;
    for (int c = 0; c < 3; ++c) {
        std::array<int, 256> hist{};
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int v = static_cast<int>(std::lround(img.at(c, y, x) * 255.0f));
                ++hist[std::clamp(v, 0, 255)];
            }
        long total = 0;
        int last_nonzero = 0;
        for (int i = 0; i < 256; ++i) {
            total += hist[i];
            if (hist[i]) last_nonzero = i;
        }
        const long step = (total - hist[last_nonzero]) / 255;
        if (step == 0) continue;
        std::array<int, 256> lut{};
        long n = step / 2;
        for (int i = 0; i < 256; ++i) {
            lut[i] = static_cast<int>(std::clamp(n / step, 0L, 255L));
            n += hist[i];
        }
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int v = static_cast<int>(std::lround(img.at(c, y, x) * 255.0f));
                out.at(c, y, x) = lut[std::clamp(v, 0, 255)] / 255.0f;
            }
    }
    return out;
}

Image invert_impl(const Image& img) {
    Image out = img;
    for (float& v : out.data) v = 1.0f - v;
    return out;
}

Image solarize_impl(const Image& img, double threshold) {
    Image out = img;
    for (float& v : out.data)
        if (v >= threshold) v = 1.0f - v;
    return out;
}

Image posterize_impl(const Image& img, int bits) {
    Image out = img;
    const int shift = 8 - std::clamp(bits, 1, 8);
    for (float& v : out.data) {
        const int q = std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255);
        v = static_cast<float>((q >> shift) << shift) / 255.0f;
    }
    return out;
}

Image saturate_impl(const Image& img, double factor) {
    Image gray(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float g = luma(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
            for (int c = 0; c < 3; ++c) gray.at(c, y, x) = g;
        }
    return blend_toward(gray, img, factor);
}

Image contrast_impl(const Image& img, double factor) {
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            mean += luma(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
    mean /= static_cast<double>(img.height) * img.width;
    Image gray(img.height, img.width);
    std::fill(gray.data.begin(), gray.data.end(), static_cast<float>(mean));
    return blend_toward(gray, img, factor);
}

Image brightness_impl(const Image& img, double factor) {
    Image black(img.height, img.width);
    return blend_toward(black, img, factor);
}

// Smooth filter [[1,1,1],[1,5,1],[1,1,1]]/13 on the interior, borders kept.
Image sharpness_impl(const Image& img, double factor) {
    Image smooth = img;
    for (int c = 0; c < 3; ++c)
        for (int y = 1; y + 1 < img.height; ++y)
            for (int x = 1; x + 1 < img.width; ++x) {
                float acc = 5.0f * img.at(c, y, x);
                acc += img.at(c, y - 1, x - 1) + img.at(c, y - 1, x) + img.at(c, y - 1, x + 1);
                acc += img.at(c, y, x - 1) + img.at(c, y, x + 1);
                acc += img.at(c, y + 1, x - 1) + img.at(c, y + 1, x) + img.at(c, y + 1, x + 1);
                smooth.at(c, y, x) = acc / 13.0f;
            }
    return blend_toward(smooth, img, factor);
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    const float d = mx - mn;
    s = mx == 0.0f ? 0.0f : d / mx;
    if (d == 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r) {
        h = (g - b) / d;
        if (h < 0.0f) h += 6.0f;
    } else if (mx == g) {
        h = (b - r) / d + 2.0f;
    } else {
        h = (r - g) / d + 4.0f;
    }
    h /= 6.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    if (s == 0.0f) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const float hh = h * 6.0f;
    const int i = static_cast<int>(hh) % 6;
    const float f = hh - std::floor(hh);
    const float p = v * (1.0f - s);
    const float q = v * (1.0f - s * f);
    const float t = v * (1.0f - s * (1.0f - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

Image hue_shift_impl(const Image& img, double shift) {
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float h, s, v;
            rgb_to_hsv(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), h, s, v);
            float r, g, b;
            hsv_to_rgb(h + static_cast<float>(shift), s, v, r, g, b);
            out.at(0, y, x) = r;
            out.at(1, y, x) = g;
            out.at(2, y, x) = b;
        }
    clamp_image(out);
    return out;
}

Image resize_bilinear_crop(const Image& img, int top, int left, int crop_h, int crop_w,
                           int out_h, int out_w) {
    Image out(out_h, out_w);
    const double sy = static_cast<double>(crop_h) / out_h;
    const double sx = static_cast<double>(crop_w) / out_w;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out_h; ++y) {
            const double src_y = top + (y + 0.5) * sy - 0.5;
            for (int x = 0; x < out_w; ++x) {
                const double src_x = left + (x + 0.5) * sx - 0.5;
                out.at(c, y, x) = sample_clamped(img, c, src_y, src_x);
            }
        }
    clamp_image(out);
    return out;
}

}  // namespace

SampleRng::SampleRng(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample,
                     std::uint64_t view) {
    std::uint64_t s = splitmix64(global_seed);
    s = splitmix64(s ^ epoch);
    s = splitmix64(s ^ sample);
    s = splitmix64(s ^ view);
    state_ = s;
}

std::mt19937_64 SampleRng::stream(std::uint32_t stage) const {
    return std::mt19937_64(splitmix64(state_ ^ (0xa0761d6478bd642fULL + stage)));
}

TransformKind transform_kind_from_name(const std::string& name) {
    if (name == "identity") return TransformKind::kIdentity;
    if (name == "autocontrast") return TransformKind::kAutoContrast;
    if (name == "equalize") return TransformKind::kEqualize;
    if (name == "invert") return TransformKind::kInvert;
    if (name == "rotate") return TransformKind::kRotate;
    if (name == "solarize") return TransformKind::kSolarize;
    if (name == "color") return TransformKind::kColor;
    if (name == "posterize") return TransformKind::kPosterize;
    if (name == "contrast") return TransformKind::kContrast;
    if (name == "brightness") return TransformKind::kBrightness;
    if (name == "sharpness") return TransformKind::kSharpness;
    if (name == "shear-x") return TransformKind::kShearX;
    if (name == "shear-y") return TransformKind::kShearY;
    if (name == "translate-x") return TransformKind::kTranslateX;
    if (name == "translate-y") return TransformKind::kTranslateY;
    throw ValidationError("unknown transform kind: " + name);
}

std::string transform_kind_name(TransformKind kind) {
    switch (kind) {
        case TransformKind::kIdentity: return "identity";
        case TransformKind::kAutoContrast: return "autocontrast";
        case TransformKind::kEqualize: return "equalize";
        case TransformKind::kInvert: return "invert";
        case TransformKind::kRotate: return "rotate";
        case TransformKind::kSolarize: return "solarize";
        case TransformKind::kColor: return "color";
        case TransformKind::kPosterize: return "posterize";
        case TransformKind::kContrast: return "contrast";
        case TransformKind::kBrightness: return "brightness";
        case TransformKind::kSharpness: return "sharpness";
        case TransformKind::kShearX: return "shear-x";
        case TransformKind::kShearY: return "shear-y";
        case TransformKind::kTranslateX: return "translate-x";
        case TransformKind::kTranslateY: return "translate-y";
    }
    throw ValidationError("unknown transform kind");
}

bool transform_is_signed(TransformKind kind) {
    switch (kind) {
        case TransformKind::kRotate:
        case TransformKind::kColor:
        case TransformKind::kContrast:
        case TransformKind::kBrightness:
        case TransformKind::kSharpness:
        case TransformKind::kShearX:
        case TransformKind::kShearY:
        case TransformKind::kTranslateX:
        case TransformKind::kTranslateY:
            return true;
        default:
            return false;
    }
}

Image apply_transform(TransformKind kind, double level, const Image& image) {
    if (level < -1.0 || level > 1.0) {
        throw ValidationError("apply_transform: level " + std::to_string(level) +
                              " outside [-1, 1]");
    }
    switch (kind) {
        case TransformKind::kIdentity:
            return image;
        case TransformKind::kAutoContrast:
            return autocontrast_impl(image);
        case TransformKind::kEqualize:
            return equalize_impl(image);
        case TransformKind::kInvert:
            return invert_impl(image);
        case TransformKind::kRotate: {
            const double rad = 30.0 * level * kPi / 180.0;
            const double c = std::cos(rad), s = std::sin(rad);
            return affine(image, c, s, -s, c, 0.0, 0.0);
        }
        case TransformKind::kSolarize:
            return solarize_impl(image, 1.0 - std::abs(level));
        case TransformKind::kColor:
            return saturate_impl(image, 1.0 + 0.9 * level);
        case TransformKind::kPosterize:
            return posterize_impl(image, 8 - static_cast<int>(std::lround(4.0 * std::abs(level))));
        case TransformKind::kContrast:
            return contrast_impl(image, 1.0 + 0.9 * level);
        case TransformKind::kBrightness:
            return brightness_impl(image, 1.0 + 0.9 * level);
        case TransformKind::kSharpness:
            return sharpness_impl(image, 1.0 + 0.9 * level);
        case TransformKind::kShearX:
            return affine(image, 1.0, 0.3 * level, 0.0, 1.0, 0.0, 0.0);
        case TransformKind::kShearY:
            return affine(image, 1.0, 0.0, 0.3 * level, 1.0, 0.0, 0.0);
        case TransformKind::kTranslateX:
            return affine(image, 1.0, 0.0, 0.0, 1.0, 150.0 / 331.0 * image.width * level, 0.0);
        case TransformKind::kTranslateY:
            return affine(image, 1.0, 0.0, 0.0, 1.0, 0.0, 150.0 / 331.0 * image.height * level);
    }
    throw ValidationError("apply_transform: unknown kind");
}

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ValidationError("gaussian_kernel: kernel size must be odd, got " +
                              std::to_string(kernel_size));
    }
    if (!(sigma > 0.0)) throw ValidationError("gaussian_kernel: sigma must be positive");
    std::vector<double> w(kernel_size);
    const int c = kernel_size / 2;
    double total = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        w[i] = std::exp(-static_cast<double>((i - c) * (i - c)) / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

Image gaussian_blur(const Image& image, int kernel_size, double sigma) {
    const std::vector<double> w = gaussian_kernel(kernel_size, sigma);
    const int r = kernel_size / 2;
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };
    Image tmp(image.height, image.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) {
                double acc = 0.0;
                for (int k = -r; k <= r; ++k)
                    acc += w[k + r] * image.at(c, y, reflect(x + k, image.width));
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
    Image out(image.height, image.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) {
                double acc = 0.0;
                for (int k = -r; k <= r; ++k)
                    acc += w[k + r] * tmp.at(c, reflect(y + k, image.height), x);
                out.at(c, y, x) = static_cast<float>(acc);
            }
    clamp_image(out);
    return out;
}

Image horizontal_flip(const Image& image) {
    Image out(image.height, image.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    return out;
}

Image grayscale(const Image& image) {
    Image out(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const float g = luma(image.at(0, y, x), image.at(1, y, x), image.at(2, y, x));
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = g;
        }
    clamp_image(out);
    return out;
}

const std::vector<TransformKind>& rand_augment_vocabulary() {
    static const std::vector<TransformKind> kVocab = {
        TransformKind::kIdentity,   TransformKind::kAutoContrast, TransformKind::kEqualize,
        TransformKind::kRotate,     TransformKind::kSolarize,     TransformKind::kColor,
        TransformKind::kPosterize,  TransformKind::kContrast,     TransformKind::kBrightness,
        TransformKind::kSharpness,  TransformKind::kShearX,       TransformKind::kShearY,
        TransformKind::kTranslateX, TransformKind::kTranslateY,
    };
    return kVocab;
}

std::vector<TransformStep> rand_augment_plan(int n_ops, int magnitude,
                                             const std::vector<TransformKind>& kinds,
                                             std::mt19937_64& rng) {
    if (n_ops < 1) throw ValidationError("rand_augment: n_ops must be >= 1");
    if (magnitude < 0 || magnitude > 30) {
        throw ValidationError("rand_augment: magnitude must be in [0, 30]");
    }
    const std::vector<TransformKind>& vocab = kinds.empty() ? rand_augment_vocabulary() : kinds;
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<TransformStep> plan;
    plan.reserve(static_cast<std::size_t>(n_ops));
    for (int i = 0; i < n_ops; ++i) {
        const TransformKind kind = vocab[pick(rng)];
        double level = magnitude / 30.0;
        if (transform_is_signed(kind) && coin(rng)) level = -level;
        plan.push_back({kind, level});
    }
    return plan;
}

Image apply_plan(const Image& image, const std::vector<TransformStep>& plan) {
    Image out = image;
    for (const TransformStep& step : plan) out = apply_transform(step.kind, step.level, out);
    return out;
}

Image rand_augment(const Image& image, int n_ops, int magnitude, std::mt19937_64& rng,
                   const std::vector<TransformKind>& kinds) {
    return apply_plan(image, rand_augment_plan(n_ops, magnitude, kinds, rng));
}

Image random_resized_crop(const Image& image, double scale_lo, double scale_hi, double aspect_lo,
                          double aspect_hi, std::mt19937_64& rng) {
    if (!(scale_lo > 0.0) || scale_hi < scale_lo) {
        throw ValidationError("random_resized_crop: bad scale range");
    }
    const int H = image.height, W = image.width;
    const double area = static_cast<double>(H) * W;
    std::uniform_real_distribution<double> sdist(scale_lo, scale_hi);
    std::uniform_real_distribution<double> rdist(std::log(aspect_lo), std::log(aspect_hi));
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * sdist(rng);
        const double ratio = std::exp(rdist(rng));
        const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w <= 0 || h <= 0 || w > W || h > H) continue;
        std::uniform_int_distribution<int> td(0, H - h), ld(0, W - w);
        const int top = td(rng), left = ld(rng);
        return resize_bilinear_crop(image, top, left, h, w, H, W);
    }
    // Center-crop fallback with the ratio clamped into range.
    const double in_ratio = static_cast<double>(W) / H;
    int w = W, h = H;
    if (in_ratio < aspect_lo) {
        w = W;
        h = static_cast<int>(std::lround(w / aspect_lo));
    } else if (in_ratio > aspect_hi) {
        h = H;
        w = static_cast<int>(std::lround(h * aspect_hi));
    }
    return resize_bilinear_crop(image, (H - h) / 2, (W - w) / 2, h, w, H, W);
}

Image color_jitter(const Image& image, double brightness, double contrast, double saturation,
                   double hue, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> bd(std::max(0.0, 1.0 - brightness), 1.0 + brightness);
    std::uniform_real_distribution<double> cd(std::max(0.0, 1.0 - contrast), 1.0 + contrast);
    std::uniform_real_distribution<double> sd(std::max(0.0, 1.0 - saturation), 1.0 + saturation);
    std::uniform_real_distribution<double> hd(-hue, hue);
    const double fb = bd(rng), fc = cd(rng), fs = sd(rng), fh = hd(rng);
    std::array<int, 4> order = {0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    Image out = image;
    for (int op : order) {
        switch (op) {
            case 0: out = brightness_impl(out, fb); break;
            case 1: out = contrast_impl(out, fc); break;
            case 2: out = saturate_impl(out, fs); break;
            default: out = hue_shift_impl(out, fh); break;
        }
    }
    return out;
}

namespace {

Image crop_flip_stage(const Image& image, const AugParams& p, const SampleRng& rng) {
    std::mt19937_64 crop_rng = rng.stream(SampleRng::kCrop);
    Image out = random_resized_crop(image, p.crop_scale_lo, p.crop_scale_hi, p.crop_aspect_lo,
                                    p.crop_aspect_hi, crop_rng);
    std::mt19937_64 flip_rng = rng.stream(SampleRng::kFlip);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(flip_rng) < p.flip_p) out = horizontal_flip(out);
    return out;
}

Image jitter_gray_blur_stage(Image out, const AugParams& p, const SampleRng& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    {
        std::mt19937_64 jrng = rng.stream(SampleRng::kJitter);
        if (coin(jrng) < p.jitter_p) {
            out = color_jitter(out, p.jitter_brightness, p.jitter_contrast, p.jitter_saturation,
                               p.jitter_hue, jrng);
        }
    }
    {
        std::mt19937_64 grng = rng.stream(SampleRng::kGray);
        if (coin(grng) < p.gray_p) out = grayscale(out);
    }
    {
        std::mt19937_64 brng = rng.stream(SampleRng::kBlur);
        if (coin(brng) < p.blur_p) {
            const int kernel =
                p.blur_kernel > 0 ? p.blur_kernel : static_cast<int>(0.1 * out.width);
            std::uniform_real_distribution<double> sdist(p.blur_sigma_lo, p.blur_sigma_hi);
            out = gaussian_blur(out, kernel, sdist(brng));
        }
    }
    clamp_image(out);
    return out;
}

}  // namespace

Image sim_augment(const Image& image, const AugParams& params, const SampleRng& rng) {
    return jitter_gray_blur_stage(crop_flip_stage(image, params, rng), params, rng);
}

Image stacked_rand_augment(const Image& image, const AugParams& params, const SampleRng& rng) {
    Image out = crop_flip_stage(image, params, rng);
    std::mt19937_64 rrng = rng.stream(SampleRng::kRandAug);
    out = rand_augment(out, params.rand_n, params.rand_m, rrng, params.rand_kinds);
    return jitter_gray_blur_stage(std::move(out), params, rng);
}

PolicyTable parse_policy(const std::string& text) {
    PolicyTable table;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        if (trimmed.empty() || trimmed[0] == '#') continue;
        SubPolicy sub;
        std::istringstream ops(trimmed);
        std::string op_text;
        while (std::getline(ops, op_text, ';')) {
            std::istringstream fields(op_text);
            std::string name, prob_s, mag_s;
            if (!std::getline(fields, name, ':') || !std::getline(fields, prob_s, ':') ||
                !std::getline(fields, mag_s)) {
                throw ValidationError("policy line " + std::to_string(line_no) +
                                      ": expected op:prob:magnitude, got '" + op_text + "'");
            }
            PolicyOp op;
            op.kind = transform_kind_from_name(name);
            try {
                op.probability = std::stod(prob_s);
                op.magnitude = std::stoi(mag_s);
            } catch (const std::exception&) {
                throw ValidationError("policy line " + std::to_string(line_no) +
                                      ": bad number in '" + op_text + "'");
            }
            if (op.probability < 0.0 || op.probability > 1.0) {
                throw ValidationError("policy line " + std::to_string(line_no) +
                                      ": probability outside [0, 1]");
            }
            if (op.magnitude < -1 || op.magnitude > 9) {
                throw ValidationError("policy line " + std::to_string(line_no) +
                                      ": magnitude outside [-1, 9]");
            }
            sub.push_back(op);
        }
        if (sub.empty()) {
            throw ValidationError("policy line " + std::to_string(line_no) + ": empty sub-policy");
        }
        table.push_back(std::move(sub));
    }
    if (table.empty()) throw ValidationError("policy: no sub-policies found");
    return table;
}

PolicyTable load_policy_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("policy: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_policy(buf.str());
}

std::string policy_to_text(const PolicyTable& table) {
    std::ostringstream out;
    for (const SubPolicy& sub : table) {
        for (std::size_t i = 0; i < sub.size(); ++i) {
            if (i) out << ";";
            out << transform_kind_name(sub[i].kind) << ":" << sub[i].probability << ":"
                << sub[i].magnitude;
        }
        out << "\n";
    }
    return out.str();
}

const PolicyTable& autoaugment_imagenet_policy() {
    static const PolicyTable kTable = parse_policy(
        "posterize:0.4:8;rotate:0.6:9\n"
        "solarize:0.6:5;autocontrast:0.6:-1\n"
        "equalize:0.8:-1;equalize:0.6:-1\n"
        "posterize:0.6:7;posterize:0.6:6\n"
        "equalize:0.4:-1;solarize:0.2:4\n"
        "equalize:0.4:-1;rotate:0.8:8\n"
        "solarize:0.6:3;equalize:0.6:-1\n"
        "posterize:0.8:5;equalize:1.0:-1\n"
        "rotate:0.2:3;solarize:0.6:8\n"
        "equalize:0.6:-1;posterize:0.4:6\n"
        "rotate:0.8:8;color:0.4:0\n"
        "rotate:0.4:9;equalize:0.6:-1\n"
        "equalize:0.0:-1;equalize:0.8:-1\n"
        "invert:0.6:-1;equalize:1.0:-1\n"
        "color:0.6:4;contrast:1.0:8\n"
        "rotate:0.8:8;color:1.0:2\n"
        "color:0.8:8;solarize:0.8:7\n"
        "sharpness:0.4:7;invert:0.6:-1\n"
        "shear-x:0.6:5;equalize:1.0:-1\n"
        "color:0.4:0;equalize:0.6:-1\n"
        "equalize:0.4:-1;solarize:0.2:4\n"
        "solarize:0.6:5;autocontrast:0.6:-1\n"
        "invert:0.6:-1;equalize:1.0:-1\n"
        "color:0.6:4;contrast:1.0:8\n"
        "equalize:0.8:-1;equalize:0.6:-1\n");
    return kTable;
}

Image auto_augment(const Image& image, const PolicyTable& table, std::mt19937_64& rng) {
    if (table.empty()) throw ValidationError("auto_augment: empty policy table");
    std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
    const SubPolicy& sub = table[pick(rng)];
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> sign(0, 1);
    Image out = image;
    for (const PolicyOp& op : sub) {
        const double apply = coin(rng);
        const int flip = sign(rng);
        if (apply >= op.probability) continue;
        double level = op.magnitude < 0 ? 0.0 : op.magnitude / 9.0;
        if (transform_is_signed(op.kind) && flip) level = -level;
        out = apply_transform(op.kind, level, out);
    }
    return out;
}

AugStrategy aug_strategy_from_name(const std::string& name) {
    if (name == "none") return AugStrategy::kNone;
    if (name == "simaugment") return AugStrategy::kSimAugment;
    if (name == "randaugment") return AugStrategy::kRandAugment;
    if (name == "stackedrandaugment") return AugStrategy::kStackedRandAugment;
    if (name == "autoaugment") return AugStrategy::kAutoAugment;
    throw ValidationError("unknown augmentation strategy: " + name);
}

std::string aug_strategy_name(AugStrategy strategy) {
    switch (strategy) {
        case AugStrategy::kNone: return "none";
        case AugStrategy::kSimAugment: return "simaugment";
        case AugStrategy::kRandAugment: return "randaugment";
        case AugStrategy::kStackedRandAugment: return "stackedrandaugment";
        case AugStrategy::kAutoAugment: return "autoaugment";
    }
    throw ValidationError("unknown augmentation strategy");
}

Image augment_sample(const Image& image, const AugPolicy& policy, const SampleRng& rng) {
    switch (policy.strategy) {
        case AugStrategy::kNone:
            return image;
        case AugStrategy::kSimAugment:
            return sim_augment(image, policy.params, rng);
        case AugStrategy::kRandAugment: {
            std::mt19937_64 rrng = rng.stream(SampleRng::kRandAug);
            return rand_augment(image, policy.params.rand_n, policy.params.rand_m, rrng,
                                policy.params.rand_kinds);
        }
        case AugStrategy::kStackedRandAugment:
            return stacked_rand_augment(image, policy.params, rng);
        case AugStrategy::kAutoAugment: {
            std::mt19937_64 arng = rng.stream(SampleRng::kAutoAug);
            return auto_augment(image, policy.autoaugment_table.empty()
                                           ? autoaugment_imagenet_policy()
                                           : policy.autoaugment_table,
                                arng);
        }
    }
    throw ValidationError("augment_sample: unknown strategy");
}

}  // namespace supcon
