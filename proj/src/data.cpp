#include "cdsl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cdsl/layers.hpp"
#include "cdsl/png_io.hpp"
#include "cdsl/rng.hpp"

namespace fs = std::filesystem;

namespace cdsl {

std::string to_string(Direction d) {
    switch (d) {
    case Direction::axial: return "axial";
    case Direction::coronal: return "coronal";
    case Direction::sagittal: return "sagittal";
    default: return "unknown";
    }
}

std::string to_string(TumorType t) {
    switch (t) {
    case TumorType::glioma: return "glioma";
    case TumorType::meningioma: return "meningioma";
    case TumorType::pituitary: return "pituitary";
    default: return "unknown";
    }
}

Direction direction_from_string(const std::string& s) {
    if (s == "axial") return Direction::axial;
    if (s == "coronal") return Direction::coronal;
    if (s == "sagittal") return Direction::sagittal;
    return Direction::unknown;
}

TumorType tumor_type_from_string(const std::string& s) {
    if (s == "glioma") return TumorType::glioma;
    if (s == "meningioma") return TumorType::meningioma;
    if (s == "pituitary") return TumorType::pituitary;
    return TumorType::unknown;
}

std::vector<std::string> FoldPlan::fold_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment)
        if (f == fold) out.push_back(id);
    return out;
}

std::vector<std::string> FoldPlan::rest_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment)
        if (f != fold) out.push_back(id);
    return out;
}

namespace {

Grid grid_from_png(const GrayImage& img, bool as_mask) {
    Grid g(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        g.v[i] = as_mask ? (img.pixels[i] >= 128 ? 1.0f : 0.0f)
                         : static_cast<float>(img.pixels[i]) / 255.0f;
    return g;
}

GrayImage png_from_grid(const Grid& g, bool as_mask) {
    GrayImage img;
    img.width = g.w;
    img.height = g.h;
    img.pixels.resize(g.v.size());
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        const float v = g.v[i];
        img.pixels[i] = as_mask ? (v > 0.5f ? 255 : 0)
                                : static_cast<std::uint8_t>(std::lround(255.0f * v));
    }
    return img;
}

struct MetaRow {
    Direction direction = Direction::unknown;
    TumorType tumor_type = TumorType::unknown;
};

std::map<std::string, MetaRow> read_meta_csv(const fs::path& path) {
    std::map<std::string, MetaRow> meta;
    std::ifstream f(path);
    if (!f) return meta;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) { // header: id,direction,tumor_type
            first = false;
            continue;
        }
        std::stringstream ss(line);
        std::string id, dir, type;
        std::getline(ss, id, ',');
        std::getline(ss, dir, ',');
        std::getline(ss, type, ',');
        meta[id] = {direction_from_string(dir), tumor_type_from_string(type)};
    }
    return meta;
}

} // namespace

std::vector<ImageSample> load_dataset(const std::string& root) {
    const fs::path images_dir = fs::path(root) / "images";
    const fs::path masks_dir = fs::path(root) / "masks";
    if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir))
        throw DataError("dataset root must contain images/ and masks/: " + root);

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());

    for (const auto& entry : fs::directory_iterator(masks_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        const std::string id = entry.path().stem().string();
        if (!std::binary_search(ids.begin(), ids.end(), id))
            throw DataError("mask without matching image: " + id);
    }

    const auto meta = read_meta_csv(fs::path(root) / "meta.csv");

    std::vector<ImageSample> samples;
    samples.reserve(ids.size());
    for (const std::string& id : ids) {
        const fs::path mask_path = masks_dir / (id + ".png");
        if (!fs::exists(mask_path)) throw DataError("missing mask for image: " + id);
        const GrayImage img = read_png_gray8((images_dir / (id + ".png")).string());
        const GrayImage msk = read_png_gray8(mask_path.string());
        if (img.width != msk.width || img.height != msk.height)
            throw DataError("image/mask size mismatch for " + id + ": " +
                            std::to_string(img.width) + "x" + std::to_string(img.height) +
                            " vs " + std::to_string(msk.width) + "x" +
                            std::to_string(msk.height));
        if (img.width % 32 != 0 || img.height % 32 != 0)
            throw DataError("image " + id + " is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) +
                            "; dimensions must be divisible by 32 -- resize the pair first");
        ImageSample s;
        s.id = id;
        s.image = grid_from_png(img, false);
        s.mask = grid_from_png(msk, true);
        if (auto it = meta.find(id); it != meta.end()) {
            s.direction = it->second.direction;
            s.tumor_type = it->second.tumor_type;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_dataset(const std::string& root, const std::vector<ImageSample>& samples) {
    const fs::path images_dir = fs::path(root) / "images";
    const fs::path masks_dir = fs::path(root) / "masks";
    fs::create_directories(images_dir);
    fs::create_directories(masks_dir);
    std::ofstream meta(fs::path(root) / "meta.csv", std::ios::trunc);
    meta << "id,direction,tumor_type\n";
    for (const auto& s : samples) {
        write_png_gray8((images_dir / (s.id + ".png")).string(), png_from_grid(s.image, false));
        write_png_gray8((masks_dir / (s.id + ".png")).string(), png_from_grid(s.mask, true));
        meta << s.id << "," << to_string(s.direction) << "," << to_string(s.tumor_type) << "\n";
    }
}

Grid resize_bilinear(const Grid& image, int factor_denom) {
    if (factor_denom != 2 && factor_denom != 4 && factor_denom != 8)
        throw std::invalid_argument("resize_bilinear: factor must be 1/2, 1/4 or 1/8");
    if (image.h % factor_denom != 0 || image.w % factor_denom != 0)
        throw std::invalid_argument("resize_bilinear: non-integer target size for " +
                                    std::to_string(image.h) + "x" + std::to_string(image.w));
    if (image.h / factor_denom < 1 || image.w / factor_denom < 1)
        throw std::invalid_argument("resize_bilinear: target too small");

    TensorF t(1, 1, image.h, image.w);
    t.data.assign(image.v.begin(), image.v.end());
    const TensorF r =
        nn::bilinear_resize_forward(t, image.h / factor_denom, image.w / factor_denom);
    Grid out(image.h / factor_denom, image.w / factor_denom);
    out.v.assign(r.data.begin(), r.data.end());
    return out;
}

FoldPlan make_folds(const std::vector<std::string>& ids, int k, std::uint32_t seed) {
    if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
    if (ids.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("make_folds: need at least k ids");
    {
        std::set<std::string> uniq(ids.begin(), ids.end());
        if (uniq.size() != ids.size()) throw std::invalid_argument("make_folds: duplicate ids");
    }
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    for (std::size_t i = 0; i < shuffled.size(); ++i)
        plan.assignment[shuffled[i]] = static_cast<int>(i % k);
    return plan;
}

std::pair<std::vector<std::string>, std::vector<std::string>>
split_train_val(const std::vector<std::string>& train_ids, double val_fraction,
                std::uint32_t seed) {
    if (train_ids.empty()) throw std::invalid_argument("split_train_val: empty id list");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_train_val: fraction must be in (0,1)");
    std::vector<std::string> shuffled = train_ids;
    Rng rng(seed);
    rng.shuffle(shuffled);
    const std::size_t n_val =
        static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(shuffled.size())));
    std::vector<std::string> val(shuffled.begin(), shuffled.begin() + n_val);
    std::vector<std::string> train(shuffled.begin() + n_val, shuffled.end());
    return {train, val};
}

namespace {

// two box-blur passes, radius 2, edge-clamped
Grid smooth(const Grid& g) {
    Grid tmp(g.h, g.w), out(g.h, g.w);
    constexpr int r = 2;
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            float acc = 0;
            for (int dx = -r; dx <= r; ++dx)
                acc += g.at(y, std::clamp(x + dx, 0, g.w - 1));
            tmp.at(y, x) = acc / (2 * r + 1);
        }
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            float acc = 0;
            for (int dy = -r; dy <= r; ++dy)
                acc += tmp.at(std::clamp(y + dy, 0, g.h - 1), x);
            out.at(y, x) = acc / (2 * r + 1);
        }
    return out;
}

} // namespace

std::vector<ImageSample> synth_dataset(int n, int size, std::uint32_t seed) {
    if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
    if (size % 32 != 0 || size < 32)
        throw std::invalid_argument("synth_dataset: size must be divisible by 32");

    std::vector<ImageSample> samples;
    samples.reserve(n);
    Rng rng(seed);
    const double total_px = static_cast<double>(size) * size;

    for (int i = 0; i < n; ++i) {
        Grid noise(size, size);
        for (auto& v : noise.v) v = static_cast<float>(rng.uniform(0.0, 0.35));
        Grid image = smooth(noise);

        // ellipse parameters resampled until the foreground fraction is safely
        // inside [0.02, 0.30]
        Grid mask(size, size);
        while (true) {
            const double cx = rng.uniform(0.30, 0.70) * size;
            const double cy = rng.uniform(0.30, 0.70) * size;
            const double ax = rng.uniform(0.10, 0.32) * size;
            const double ay = rng.uniform(0.10, 0.32) * size;
            const double theta = rng.uniform(0.0, 3.141592653589793);
            const double ct = std::cos(theta), st = std::sin(theta);
            std::size_t fg = 0;
            Grid cand(size, size);
            Grid radial(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                    const double u = (dx * ct + dy * st) / ax;
                    const double v = (-dx * st + dy * ct) / ay;
                    const double r2 = u * u + v * v;
                    if (r2 <= 1.0) {
                        cand.at(y, x) = 1.0f;
                        radial.at(y, x) = static_cast<float>(1.0 - r2);
                        ++fg;
                    }
                }
            const double frac = fg / total_px;
            if (frac >= 0.03 && frac <= 0.28) {
                mask = cand;
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        if (mask.at(y, x) > 0.5f) {
                            const float v = 0.55f + 0.25f * radial.at(y, x) +
                                            0.4f * (image.at(y, x) - 0.175f);
                            image.at(y, x) = std::clamp(v, 0.0f, 1.0f);
                        }
                break;
            }
        }

        ImageSample s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%04d", i);
        s.id = buf;
        s.image = std::move(image);
        s.mask = std::move(mask);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<NetSample> to_net_samples(const std::vector<ImageSample>& samples) {
    std::vector<NetSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        NetSample ns;
        ns.id = s.id;
        ns.input = TensorF(1, 1, s.image.h, s.image.w);
        ns.input.data.assign(s.image.v.begin(), s.image.v.end());
        ns.mask = TensorF(1, 1, s.mask.h, s.mask.w);
        ns.mask.data.assign(s.mask.v.begin(), s.mask.v.end());
        out.push_back(std::move(ns));
    }
    return out;
}

std::pair<TensorF, TensorF> collate(const std::vector<NetSample>& samples,
                                    const std::vector<int>& order, std::size_t first,
                                    std::size_t last) {
    const int b = static_cast<int>(last - first);
    const Shape4 in = samples[order[first]].input.shape;
    const Shape4 mk = samples[order[first]].mask.shape;
    TensorF batch(b, in.c, in.h, in.w);
    TensorF masks(b, mk.c, mk.h, mk.w);
    for (int i = 0; i < b; ++i) {
        const NetSample& s = samples[order[first + i]];
        if (!(s.input.shape == in) || !(s.mask.shape == mk))
            throw std::invalid_argument("collate: samples have differing dimensions");
        std::copy(s.input.data.begin(), s.input.data.end(),
                  batch.data.begin() + static_cast<std::size_t>(i) * s.input.numel());
        std::copy(s.mask.data.begin(), s.mask.data.end(),
                  masks.data.begin() + static_cast<std::size_t>(i) * s.mask.numel());
    }
    return {std::move(batch), std::move(masks)};
}

} // namespace cdsl
