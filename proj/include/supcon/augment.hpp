#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "supcon/error.hpp"

namespace supcon {

/// 3-channel float image, CHW layout, values kept in [0,1] by every
/// transform. The pipelines operate at 32×32; the primitives are generic.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3 * h * w), 0.0f) {}

    float& at(int c, int y, int x) { return data[(c * height + y) * static_cast<std::size_t>(width) + x]; }
    float at(int c, int y, int x) const {
        return data[(c * height + y) * static_cast<std::size_t>(width) + x];
    }
};

/// Derives per-sample random streams as a pure function of
/// (global_seed, epoch, sample, view); each pipeline stage pulls its own
/// engine so augmenting samples in any order gives identical results.
class SampleRng {
public:
    SampleRng(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t sample,
              std::uint64_t view = 0);
    std::mt19937_64 stream(std::uint32_t stage) const;

    // Stage ids shared by the pipelines.
    static constexpr std::uint32_t kCrop = 0;
    static constexpr std::uint32_t kFlip = 1;
    static constexpr std::uint32_t kRandAug = 2;
    static constexpr std::uint32_t kJitter = 3;
    static constexpr std::uint32_t kGray = 4;
    static constexpr std::uint32_t kBlur = 5;
    static constexpr std::uint32_t kAutoAug = 6;

private:
    std::uint64_t state_;
};

/// Transform vocabulary behind RandAugment and the AutoAugment policy table.
enum class TransformKind {
    kIdentity,
    kAutoContrast,
    kEqualize,
    kInvert,
    kRotate,
    kSolarize,
    kColor,
    kPosterize,
    kContrast,
    kBrightness,
    kSharpness,
    kShearX,
    kShearY,
    kTranslateX,
    kTranslateY,
};

TransformKind transform_kind_from_name(const std::string& name);
std::string transform_kind_name(TransformKind kind);
bool transform_is_signed(TransformKind kind);

/// Applies one transform at a normalized level in [-1, 1]; the per-kind
/// parameter ranges follow the usual magnitude tables (shear 0.3, translate
/// 150/331 of the width, rotation 30°, enhancement factors 1 ± 0.9·level,
/// posterize down to 4 bits, solarize threshold 1-|level|). Geometric kinds
/// at level 0 are exact identities.
Image apply_transform(TransformKind kind, double level, const Image& image);

/// Separable Gaussian convolution with reflect padding; kernel_size must be
/// odd (the 32-px pipelines use int(0.1·32) = 3).
Image gaussian_blur(const Image& image, int kernel_size, double sigma);

std::vector<double> gaussian_kernel(int kernel_size, double sigma);

Image horizontal_flip(const Image& image);
Image grayscale(const Image& image);  // BT.601 luma in all channels

struct AugParams {
    double crop_scale_lo = 0.2, crop_scale_hi = 1.0;
    double crop_aspect_lo = 3.0 / 4.0, crop_aspect_hi = 4.0 / 3.0;
    double flip_p = 0.5;
    double jitter_p = 0.8;  // apply-probability of the whole jitter block
    double jitter_brightness = 0.4, jitter_contrast = 0.4, jitter_saturation = 0.4;
    double jitter_hue = 0.1;
    double gray_p = 0.2;
    double blur_p = 1.0;
    double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
    int blur_kernel = 0;  // 0 -> int(0.1 * width)
    int rand_n = 2;
    int rand_m = 9;
    std::vector<TransformKind> rand_kinds;  // empty -> the 14-op vocabulary
};

const std::vector<TransformKind>& rand_augment_vocabulary();

/// One sampled RandAugment step: (kind, signed level).
struct TransformStep {
    TransformKind kind;
    double level;
};

std::vector<TransformStep> rand_augment_plan(int n_ops, int magnitude,
                                             const std::vector<TransformKind>& kinds,
                                             std::mt19937_64& rng);
Image apply_plan(const Image& image, const std::vector<TransformStep>& plan);
Image rand_augment(const Image& image, int n_ops, int magnitude, std::mt19937_64& rng,
                   const std::vector<TransformKind>& kinds = {});

Image random_resized_crop(const Image& image, double scale_lo, double scale_hi, double aspect_lo,
                          double aspect_hi, std::mt19937_64& rng);
Image color_jitter(const Image& image, double brightness, double contrast, double saturation,
                   double hue, std::mt19937_64& rng);

/// Crop, flip, jitter, grayscale, blur — the SimCLR-style pipeline.
Image sim_augment(const Image& image, const AugParams& params, const SampleRng& rng);
/// SimAugment with a RandAugment step inserted between flip and jitter.
Image stacked_rand_augment(const Image& image, const AugParams& params, const SampleRng& rng);

struct PolicyOp {
    TransformKind kind;
    double probability;
    int magnitude;  // 0..9, or -1 for kinds that take none
};
using SubPolicy = std::vector<PolicyOp>;
using PolicyTable = std::vector<SubPolicy>;

/// Line-oriented policy text, one sub-policy per line:
/// `op:prob:magnitude;op:prob:magnitude`.
PolicyTable parse_policy(const std::string& text);
PolicyTable load_policy_file(const std::string& path);
std::string policy_to_text(const PolicyTable& table);

/// The 25-sub-policy table learned for ImageNet, as shipped in
/// data/autoaugment_imagenet.policy.
const PolicyTable& autoaugment_imagenet_policy();

Image auto_augment(const Image& image, const PolicyTable& table, std::mt19937_64& rng);

enum class AugStrategy { kNone, kSimAugment, kRandAugment, kStackedRandAugment, kAutoAugment };

AugStrategy aug_strategy_from_name(const std::string& name);
std::string aug_strategy_name(AugStrategy strategy);

struct AugPolicy {
    AugStrategy strategy = AugStrategy::kNone;
    AugParams params;
    PolicyTable autoaugment_table;  // empty -> the built-in ImageNet table
};

/// Dispatches one sample through the configured strategy.
Image augment_sample(const Image& image, const AugPolicy& policy, const SampleRng& rng);

}  // namespace supcon
