#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "supcon/augment.hpp"
#include "supcon/tensor.hpp"

namespace supcon {

// Split tags carried per record in the bank file.
enum : std::uint8_t {
    kSplitTrain = 0,
    kSplitVal = 1,
    kSplitTest = 2,
    kSplitUnassigned = 255,
};

struct BankRecord {
    std::vector<std::uint8_t> pixels;  // h·w·c, row-major RGB
    std::uint16_t label = 0;
    std::uint8_t domain = 0;
    std::uint8_t split = kSplitUnassigned;
};

/// Multi-domain image container. Every record shares dimensions and one
/// class vocabulary; the domain tag distinguishes rendering styles/sources.
struct ImageBank {
    std::uint16_t height = 32;
    std::uint16_t width = 32;
    std::uint8_t channels = 3;
    std::vector<std::string> class_names;
    std::vector<std::string> domain_names;
    std::vector<BankRecord> records;

    std::size_t num_classes() const { return class_names.size(); }
    std::size_t num_domains() const { return domain_names.size(); }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    void validate() const;
};

/// Bit-exact little-endian bank format, magic "MDIB", version 1.
void write_bank(const ImageBank& bank, const std::string& path);
ImageBank read_bank(const std::string& path);
std::vector<std::uint8_t> serialize_bank(const ImageBank& bank);
ImageBank deserialize_bank(const std::vector<std::uint8_t>& bytes);

/// Concatenates banks sharing dimensions and class vocabulary. Domain name
/// lists are unioned and record tags remapped accordingly.
ImageBank combine_domains(const std::vector<ImageBank>& banks);

struct SplitSpec {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> val;
    std::vector<std::uint32_t> test;
    std::uint64_t seed = 0;
};

/// Random 70/30 train/val split over the non-test records, floor on the
/// train side, deterministic from the seed. Test-tagged records pass through.
SplitSpec split_train_val(const ImageBank& bank, std::uint64_t seed);

/// Hold-out hierarchy: an official val split (tag 1) is used when present,
/// otherwise the random 70/30 rule. Test records are always tag 2.
SplitSpec derive_splits(const ImageBank& bank, std::uint64_t seed);

/// Deterministic multi-domain generator: classes are parametric shapes,
/// domains are rendering styles. test_fraction of each class×domain group is
/// tagged as the test split (0 keeps everything trainable).
ImageBank gen_synthetic_multidomain(int n_classes, int n_domains, int n_per_class_per_domain,
                                    std::uint64_t seed, double test_fraction = 0.3);

std::size_t synthetic_shape_count();
std::size_t synthetic_style_count();

/// Converts one record to a float [0,1] CHW image.
Image record_to_image(const ImageBank& bank, std::uint32_t index);

struct Batch {
    Tensor<float> images;  // [B×3×H×W]; two-view batches stack [views1 | views2]
    std::vector<int> labels;
    std::vector<std::uint32_t> sample_indices;
};

struct BatchOptions {
    int batch_size = 64;
    std::uint64_t shuffle_seed = 0;
    std::uint64_t augment_seed = 0;
    int views = 1;  // 2 duplicates labels and stacks both augmented views
    AugPolicy policy;
    bool drop_last = false;
};

/// One epoch of shuffled batches. Augmentation randomness per sample is a
/// pure function of (augment_seed, epoch, record index, view).
class BatchStream {
public:
    BatchStream(const ImageBank& bank, std::vector<std::uint32_t> indices,
                const BatchOptions& options, std::uint64_t epoch);
    std::optional<Batch> next();
    std::size_t batches_per_epoch() const;

private:
    const ImageBank& bank_;
    std::vector<std::uint32_t> order_;
    BatchOptions options_;
    std::uint64_t epoch_;
    std::size_t cursor_ = 0;
};

}  // namespace supcon
