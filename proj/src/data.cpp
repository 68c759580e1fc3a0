#include "supcon/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace supcon {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'I', 'B'};
constexpr std::uint8_t kVersion = 1;

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void raw(const std::uint8_t* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    void str(const std::string& s) {
        if (s.size() > 0xffff) throw ValidationError("bank: string too long");
        u16(static_cast<std::uint16_t>(s.size()));
        raw(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, const char* what)
        : bytes_(bytes), what_(what) {}
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    void raw(std::uint8_t* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, &bytes_[pos_], n);
        pos_ += n;
    }
    std::string str() {
        const std::uint16_t n = u16();
        need(n);
        std::string s(reinterpret_cast<const char*>(&bytes_[pos_]), n);
        pos_ += n;
        return s;
    }
    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw ValidationError(std::string(what_) + ": truncated file");
        }
    }
    const std::vector<std::uint8_t>& bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

bool valid_split_tag(std::uint8_t s) {
    return s == kSplitTrain || s == kSplitVal || s == kSplitTest || s == kSplitUnassigned;
}

}  // namespace

void ImageBank::validate() const {
    if (channels != 3) throw ValidationError("bank: only 3-channel banks are supported");
    if (class_names.empty()) throw ValidationError("bank: empty class vocabulary");
    if (domain_names.empty()) throw ValidationError("bank: empty domain list");
    const std::size_t px = pixel_count();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const BankRecord& r = records[i];
        if (r.pixels.size() != px) {
            throw ValidationError("bank: record " + std::to_string(i) + " has " +
                                  std::to_string(r.pixels.size()) + " pixels, expected " +
                                  std::to_string(px));
        }
        if (r.label >= class_names.size()) {
            throw ValidationError("bank: record " + std::to_string(i) + " class " +
                                  std::to_string(r.label) + " out of range");
        }
        if (r.domain >= domain_names.size()) {
            throw ValidationError("bank: record " + std::to_string(i) + " domain " +
                                  std::to_string(r.domain) + " out of range");
        }
        if (!valid_split_tag(r.split)) {
            throw ValidationError("bank: record " + std::to_string(i) + " has bad split tag");
        }
    }
}

std::vector<std::uint8_t> serialize_bank(const ImageBank& bank) {
    bank.validate();
    if (bank.records.size() > 0xffffffffu) throw ValidationError("bank: too many records");
    if (bank.class_names.size() > 0xffff) throw ValidationError("bank: too many classes");
    if (bank.domain_names.size() > 0xff) throw ValidationError("bank: too many domains");
    ByteWriter w;
    w.raw(reinterpret_cast<const std::uint8_t*>(kMagic), 4);
    w.u8(kVersion);
    w.u32(static_cast<std::uint32_t>(bank.records.size()));
    w.u16(bank.height);
    w.u16(bank.width);
    w.u8(bank.channels);
    w.u16(static_cast<std::uint16_t>(bank.class_names.size()));
    w.u8(static_cast<std::uint8_t>(bank.domain_names.size()));
    for (const std::string& s : bank.class_names) w.str(s);
    for (const std::string& s : bank.domain_names) w.str(s);
    for (const BankRecord& r : bank.records) {
        w.u16(r.label);
        w.u8(r.domain);
        w.u8(r.split);
        w.raw(r.pixels.data(), r.pixels.size());
    }
    return w.take();
}

ImageBank deserialize_bank(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes, "bank");
    char magic[4];
    r.raw(reinterpret_cast<std::uint8_t*>(magic), 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("bank: bad magic");
    const std::uint8_t version = r.u8();
    if (version != kVersion) {
        throw ValidationError("bank: unsupported version " + std::to_string(version));
    }
    const std::uint32_t n_records = r.u32();
    ImageBank bank;
    bank.height = r.u16();
    bank.width = r.u16();
    bank.channels = r.u8();
    const std::uint16_t n_classes = r.u16();
    const std::uint8_t n_domains = r.u8();
    bank.class_names.reserve(n_classes);
    for (std::uint16_t i = 0; i < n_classes; ++i) bank.class_names.push_back(r.str());
    bank.domain_names.reserve(n_domains);
    for (std::uint8_t i = 0; i < n_domains; ++i) bank.domain_names.push_back(r.str());
    const std::size_t px = bank.pixel_count();
    bank.records.resize(n_records);
    for (std::uint32_t i = 0; i < n_records; ++i) {
        BankRecord& rec = bank.records[i];
        rec.label = r.u16();
        rec.domain = r.u8();
        rec.split = r.u8();
        rec.pixels.resize(px);
        r.raw(rec.pixels.data(), px);
    }
    if (!r.exhausted()) throw ValidationError("bank: trailing bytes after records");
    bank.validate();
    return bank;
}

void write_bank(const ImageBank& bank, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_bank(bank);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("bank: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("bank: write failed for " + path);
}

ImageBank read_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("bank: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_bank(bytes);
}

ImageBank combine_domains(const std::vector<ImageBank>& banks) {
    if (banks.empty()) throw ValidationError("combine_domains: no banks");
    ImageBank out;
    out.height = banks[0].height;
    out.width = banks[0].width;
    out.channels = banks[0].channels;
    out.class_names = banks[0].class_names;
    for (const ImageBank& b : banks) {
        if (b.height != out.height || b.width != out.width || b.channels != out.channels) {
            throw ValidationError("combine_domains: dimension mismatch");
        }
        if (b.class_names != out.class_names) {
            throw ValidationError("combine_domains: class vocabulary mismatch");
        }
        std::vector<std::uint8_t> remap(b.domain_names.size());
        for (std::size_t d = 0; d < b.domain_names.size(); ++d) {
            auto it = std::find(out.domain_names.begin(), out.domain_names.end(),
                                b.domain_names[d]);
            if (it == out.domain_names.end()) {
                if (out.domain_names.size() >= 0xff) {
                    throw ValidationError("combine_domains: too many domains");
                }
                out.domain_names.push_back(b.domain_names[d]);
                remap[d] = static_cast<std::uint8_t>(out.domain_names.size() - 1);
            } else {
                remap[d] = static_cast<std::uint8_t>(it - out.domain_names.begin());
            }
        }
        for (const BankRecord& r : b.records) {
            BankRecord copy = r;
            copy.domain = remap[r.domain];
            out.records.push_back(std::move(copy));
        }
    }
    out.validate();
    return out;
}

SplitSpec split_train_val(const ImageBank& bank, std::uint64_t seed) {
    SplitSpec spec;
    spec.seed = seed;
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 0; i < bank.records.size(); ++i) {
        if (bank.records[i].split == kSplitTest) {
            spec.test.push_back(i);
        } else {
            pool.push_back(i);
        }
    }
    if (pool.size() < 2) throw ValidationError("split_train_val: need at least 2 records");
    std::mt19937_64 rng(mix64(seed));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(0.7 * static_cast<double>(pool.size())));
    spec.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
    spec.val.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
    return spec;
}

SplitSpec derive_splits(const ImageBank& bank, std::uint64_t seed) {
    bool has_official_val = false;
    for (const BankRecord& r : bank.records)
        if (r.split == kSplitVal) has_official_val = true;
    if (!has_official_val) return split_train_val(bank, seed);
    SplitSpec spec;
    spec.seed = seed;
    for (std::uint32_t i = 0; i < bank.records.size(); ++i) {
        switch (bank.records[i].split) {
            case kSplitVal: spec.val.push_back(i); break;
            case kSplitTest: spec.test.push_back(i); break;
            default: spec.train.push_back(i); break;
        }
    }
    return spec;
}

namespace {

// Shape predicates on normalized coordinates u,v in [-1,1] relative to the
// shape center, already divided by the shape radius.
bool shape_hit(int shape, double u, double v) {
    const double r = std::sqrt(u * u + v * v);
    switch (shape) {
        case 0:  // circle
            return r <= 1.0;
        case 1:  // square
            return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
        case 2:  // triangle (upwards)
            return v >= -0.8 && std::abs(u) <= (0.9 - 0.85 * (v + 0.8) / 1.7);
        case 3:  // cross
            return (std::abs(u) <= 0.32 && std::abs(v) <= 1.0) ||
                   (std::abs(v) <= 0.32 && std::abs(u) <= 1.0);
        case 4:  // diamond
            return std::abs(u) + std::abs(v) <= 1.1;
        case 5:  // ring
            return r <= 1.0 && r >= 0.55;
        case 6:  // horizontal bars
            return std::abs(u) <= 0.95 && std::fmod(std::abs(v * 2.5), 1.0) < 0.5 &&
                   std::abs(v) <= 1.0;
        case 7:  // checker
            return std::abs(u) <= 1.0 && std::abs(v) <= 1.0 &&
                   (static_cast<int>(std::floor((u + 1.0) * 1.5)) +
                    static_cast<int>(std::floor((v + 1.0) * 1.5))) % 2 == 0;
        default:
            return false;
    }
}

constexpr int kShapeCount = 8;
constexpr int kStyleCount = 5;  // solid, outline, speckle, inverted, gradient

struct Rgb {
    double r, g, b;
};

Rgb hue_color(double h, double s, double v) {
    const double hh = h * 6.0;
    const int i = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

}  // namespace

std::size_t synthetic_shape_count() { return kShapeCount; }
std::size_t synthetic_style_count() { return kStyleCount; }

ImageBank gen_synthetic_multidomain(int n_classes, int n_domains, int n_per_class_per_domain,
                                    std::uint64_t seed, double test_fraction) {
    if (n_classes < 2 || n_classes > kShapeCount) {
        throw ValidationError("gen_synthetic: classes must be in [2, " +
                              std::to_string(kShapeCount) + "]");
    }
    if (n_domains < 1 || n_domains > kStyleCount) {
        throw ValidationError("gen_synthetic: domains must be in [1, " +
                              std::to_string(kStyleCount) + "]");
    }
    if (n_per_class_per_domain < 1) throw ValidationError("gen_synthetic: per-count must be >= 1");
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ValidationError("gen_synthetic: test fraction must be in [0, 1)");
    }

    static const char* kShapeNames[kShapeCount] = {"circle", "square",  "triangle", "cross",
                                                   "diamond", "ring",   "bars",     "checker"};
    static const char* kStyleNames[kStyleCount] = {"solid", "outline", "speckle", "inverted",
                                                   "gradient"};
    ImageBank bank;
    bank.class_names.assign(kShapeNames, kShapeNames + n_classes);
    bank.domain_names.assign(kStyleNames, kStyleNames + n_domains);

    const int H = bank.height, W = bank.width;
    const int n_test = static_cast<int>(std::floor(test_fraction * n_per_class_per_domain));
    for (int cls = 0; cls < n_classes; ++cls) {
        for (int dom = 0; dom < n_domains; ++dom) {
            for (int k = 0; k < n_per_class_per_domain; ++k) {
                // Per-record stream keyed by identity, not generation order.
                std::mt19937_64 rng(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(cls)) ^
                                          (static_cast<std::uint64_t>(dom) << 20)) ^
                                    static_cast<std::uint64_t>(k));
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                const double cx = W / 2.0 + (unit(rng) - 0.5) * 0.35 * W;
                const double cy = H / 2.0 + (unit(rng) - 0.5) * 0.35 * H;
                const double radius = (0.22 + 0.16 * unit(rng)) * W;
                const double fg_hue = unit(rng);
                const Rgb fg = hue_color(fg_hue, 0.55 + 0.4 * unit(rng), 0.75 + 0.25 * unit(rng));
                const double bg_level = 0.05 + 0.12 * unit(rng);
                const Rgb bg = {bg_level, bg_level, bg_level * (0.8 + 0.4 * unit(rng))};
                const double speckle_p = 0.12;

                BankRecord rec;
                rec.label = static_cast<std::uint16_t>(cls);
                rec.domain = static_cast<std::uint8_t>(dom);
                rec.split = (n_test > 0 && k >= n_per_class_per_domain - n_test)
                                ? kSplitTest
                                : kSplitTrain;
                rec.pixels.resize(bank.pixel_count());
                for (int y = 0; y < H; ++y) {
                    for (int x = 0; x < W; ++x) {
                        const double u = (x - cx) / radius, v = (y - cy) / radius;
                        bool on = shape_hit(cls, u, v);
                        if (dom == 1 && on) {
                            // outline-only: keep a thin boundary band
                            const double step = 1.6 / radius;
                            const bool interior =
                                shape_hit(cls, u - step, v) && shape_hit(cls, u + step, v) &&
                                shape_hit(cls, u, v - step) && shape_hit(cls, u, v + step);
                            on = !interior;
                        }
                        Rgb px = on ? fg : bg;
                        if (dom == 2) {  // speckle noise over the solid render
                            if (unit(rng) < speckle_p) {
                                const double n = unit(rng);
                                px = {n, n, n};
                            }
                        } else if (dom == 3) {  // inverted palette
                            px = {1.0 - px.r, 1.0 - px.g, 1.0 - px.b};
                        } else if (dom == 4) {  // vertical gradient lighting
                            const double shade = 0.45 + 0.55 * (static_cast<double>(y) / (H - 1));
                            px = {px.r * shade, px.g * shade, px.b * shade};
                        }
                        const std::size_t base =
                            (static_cast<std::size_t>(y) * W + x) * 3;
                        rec.pixels[base + 0] =
                            static_cast<std::uint8_t>(std::lround(std::clamp(px.r, 0.0, 1.0) * 255));
                        rec.pixels[base + 1] =
                            static_cast<std::uint8_t>(std::lround(std::clamp(px.g, 0.0, 1.0) * 255));
                        rec.pixels[base + 2] =
                            static_cast<std::uint8_t>(std::lround(std::clamp(px.b, 0.0, 1.0) * 255));
                    }
                }
                bank.records.push_back(std::move(rec));
            }
        }
    }
    bank.validate();
    return bank;
}

Image record_to_image(const ImageBank& bank, std::uint32_t index) {
    if (index >= bank.records.size()) throw ValidationError("record_to_image: index out of range");
    const BankRecord& rec = bank.records[index];
    Image img(bank.height, bank.width);
    for (int y = 0; y < bank.height; ++y)
        for (int x = 0; x < bank.width; ++x)
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) =
                    rec.pixels[(static_cast<std::size_t>(y) * bank.width + x) * 3 +
                               static_cast<std::size_t>(c)] /
                    255.0f;
            }
    return img;
}

BatchStream::BatchStream(const ImageBank& bank, std::vector<std::uint32_t> indices,
                         const BatchOptions& options, std::uint64_t epoch)
    : bank_(bank), order_(std::move(indices)), options_(options), epoch_(epoch) {
    if (options_.batch_size < 1) throw ValidationError("batch_iter: batch size must be >= 1");
    if (options_.views != 1 && options_.views != 2) {
        throw ValidationError("batch_iter: views must be 1 or 2");
    }
    if (order_.empty()) throw ValidationError("batch_iter: empty split");
    for (std::uint32_t i : order_) {
        if (i >= bank_.records.size()) throw ValidationError("batch_iter: index out of range");
    }
    std::mt19937_64 rng(mix64(mix64(options_.shuffle_seed) ^ epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchStream::batches_per_epoch() const {
    const std::size_t b = static_cast<std::size_t>(options_.batch_size);
    return options_.drop_last ? order_.size() / b : (order_.size() + b - 1) / b;
}

std::optional<Batch> BatchStream::next() {
    const std::size_t b = static_cast<std::size_t>(options_.batch_size);
    const std::size_t remaining = order_.size() - cursor_;
    if (remaining == 0) return std::nullopt;
    if (remaining < b && options_.drop_last) return std::nullopt;
    const std::size_t n = std::min(b, remaining);

    const std::size_t rows = n * static_cast<std::size_t>(options_.views);
    Batch batch;
    batch.images = Tensor<float>::zeros(
        {rows, 3, static_cast<std::size_t>(bank_.height), static_cast<std::size_t>(bank_.width)});
    batch.labels.resize(rows);
    batch.sample_indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + n));
    const std::size_t plane = batch.images.numel() / rows;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t rec = batch.sample_indices[i];
        const Image base = record_to_image(bank_, rec);
        for (int view = 0; view < options_.views; ++view) {
            SampleRng rng(options_.augment_seed, epoch_, rec, static_cast<std::uint64_t>(view));
            const Image aug = augment_sample(base, options_.policy, rng);
            const std::size_t row = i + static_cast<std::size_t>(view) * n;
            std::copy(aug.data.begin(), aug.data.end(),
                      batch.images.data.begin() + static_cast<std::ptrdiff_t>(row * plane));
            batch.labels[row] = bank_.records[rec].label;
        }
    }
    cursor_ += n;
    return batch;
}

}  // namespace supcon
