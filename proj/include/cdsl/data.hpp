#ifndef CDSL_DATA_HPP
#define CDSL_DATA_HPP

#include <map>
#include <string>
#include <vector>

#include "cdsl/tensor.hpp"

namespace cdsl {

struct Grid {
    int h = 0, w = 0;
    std::vector<float> v;

    Grid() = default;
    Grid(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0.0f) {}

    float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }

    bool operator==(const Grid&) const = default;
};

enum class Direction { axial, coronal, sagittal, unknown };
enum class TumorType { glioma, meningioma, pituitary, unknown };

std::string to_string(Direction d);
std::string to_string(TumorType t);
Direction direction_from_string(const std::string& s);
TumorType tumor_type_from_string(const std::string& s);

// One grayscale image with its binary ground-truth mask. Dimensions are
// divisible by 32 (network downsampling depth); image values in [0,1], mask
// values exactly 0 or 1.
struct ImageSample {
    std::string id;
    Grid image;
    Grid mask;
    Direction direction = Direction::unknown;
    TumorType tumor_type = TumorType::unknown;

    bool operator==(const ImageSample&) const = default;
};

// Deterministic k-fold assignment plus the per-fold train/validation fraction.
struct FoldPlan {
    int k = 0;
    std::uint32_t seed = 0;
    double val_fraction = 0.2;
    std::map<std::string, int> assignment; // id -> fold index in [0,k)

    std::vector<std::string> fold_ids(int fold) const;
    std::vector<std::string> rest_ids(int fold) const; // everything outside `fold`
};

// Reads `<root>/images/<id>.png` + `<root>/masks/<id>.png` pairs (8-bit
// grayscale), plus optional `<root>/meta.csv` with header id,direction,tumor_type.
// Pixels divide by 255; masks binarize at >=128. Result sorted by id.
std::vector<ImageSample> load_dataset(const std::string& root);

// Writes the same layout load_dataset reads (images, masks, meta.csv).
void save_dataset(const std::string& root, const std::vector<ImageSample>& samples);

// Bilinear downsampling, corner-aligned-false. factor_denom is 2, 4 or 8.
Grid resize_bilinear(const Grid& image, int factor_denom);

// Seeded Fisher-Yates shuffle then round-robin assignment.
FoldPlan make_folds(const std::vector<std::string>& ids, int k, std::uint32_t seed);

// Seeded shuffle; first ceil(val_fraction*n) ids become validation.
std::pair<std::vector<std::string>, std::vector<std::string>>
split_train_val(const std::vector<std::string>& train_ids, double val_fraction,
                std::uint32_t seed);

// Desk-scale synthetic dataset: smoothed noise background plus one filled
// ellipse of elevated intensity; the mask is the ellipse. Foreground area is
// kept between 2% and 30% of the pixels.
std::vector<ImageSample> synth_dataset(int n, int size, std::uint32_t seed);

// Tensor-facing form of a sample: input (1,c,h,w), mask (1,1,h,w).
struct NetSample {
    std::string id;
    TensorF input;
    TensorF mask;
};

std::vector<NetSample> to_net_samples(const std::vector<ImageSample>& samples);

// Stacks samples[index[first..last)] into one batch plus the matching masks.
std::pair<TensorF, TensorF> collate(const std::vector<NetSample>& samples,
                                    const std::vector<int>& order, std::size_t first,
                                    std::size_t last);

} // namespace cdsl

#endif
