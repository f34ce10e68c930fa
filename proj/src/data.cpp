#include "splashlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "splashlab/rng.hpp"

namespace splashlab {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803; // ubyte, 3 dims
constexpr std::uint32_t kIdxImages4d = 0x00000804;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("idx: truncated file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n,
                                      const std::string& path) {
    std::vector<unsigned char> buf(n);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw std::runtime_error("idx: truncated file: " + path);
    return buf;
}

} // namespace

Tensor Dataset::image(std::size_t i) const {
    const std::size_t isz = image_size();
    std::vector<double> buf(images.data() + i * isz, images.data() + (i + 1) * isz);
    return Tensor({1, channels(), height(), width()}, std::move(buf));
}

Tensor Dataset::gather(const std::vector<std::size_t>& idx) const {
    const std::size_t isz = image_size();
    Tensor out({idx.size(), channels(), height(), width()});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(images.data() + idx[r] * isz, images.data() + (idx[r] + 1) * isz,
                  out.data() + r * isz);
    return out;
}

void Dataset::validate() const {
    if (images.rank() != 4)
        throw std::invalid_argument("dataset: images must be [N,C,H,W], got " +
                                    images.shape_str());
    if (labels.size() != size())
        throw std::invalid_argument("dataset: image count " + std::to_string(size()) +
                                    " does not match label count " +
                                    std::to_string(labels.size()));
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("dataset: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(num_classes) + ")");
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i] < 0.0 || images[i] > 1.0)
            throw std::invalid_argument("dataset: pixel outside [0,1]");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name, const std::string& split) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    std::uint32_t magic = read_be32(img, images_path);
    if (magic != kIdxImages && magic != kIdxImages4d) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", magic);
        throw std::runtime_error("idx: bad image magic " + std::string(hex) + " in " +
                                 images_path);
    }
    std::uint32_t n = read_be32(img, images_path);
    std::uint32_t c = 1;
    if (magic == kIdxImages4d) c = read_be32(img, images_path);
    std::uint32_t rows = read_be32(img, images_path);
    std::uint32_t cols = read_be32(img, images_path);
    std::vector<unsigned char> pixels =
        read_bytes(img, std::size_t(n) * c * rows * cols, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
    std::uint32_t lmagic = read_be32(lab, labels_path);
    if (lmagic != kIdxLabels) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", lmagic);
        throw std::runtime_error("idx: bad label magic " + std::string(hex) + " in " +
                                 labels_path);
    }
    std::uint32_t ln = read_be32(lab, labels_path);
    if (ln != n)
        throw std::runtime_error("idx: image count " + std::to_string(n) +
                                 " does not match label count " + std::to_string(ln));
    std::vector<unsigned char> raw_labels = read_bytes(lab, ln, labels_path);

    Dataset ds;
    ds.name = name;
    ds.split = split;
    ds.images = Tensor({n, c, rows, cols});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        ds.images[i] = static_cast<double>(pixels[i]) / 255.0;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = std::max(10, max_label + 1);
    ds.validate();
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot write " + images_path);
    const bool grayscale = ds.channels() == 1;
    write_be32(img, grayscale ? kIdxImages : kIdxImages4d);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    if (!grayscale) write_be32(img, static_cast<std::uint32_t>(ds.channels()));
    write_be32(img, static_cast<std::uint32_t>(ds.height()));
    write_be32(img, static_cast<std::uint32_t>(ds.width()));
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        double v = std::round(ds.images[i] * 255.0);
        unsigned char b = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
        img.put(static_cast<char>(b));
    }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot write " + labels_path);
    write_be32(lab, kIdxLabels);
    write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset load_cifar10_files(const std::vector<std::string>& files, const std::string& split) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    std::vector<unsigned char> all;
    for (const std::string& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cifar10: cannot open " + path);
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
        if (buf.empty() || buf.size() % kRecord != 0)
            throw std::runtime_error("cifar10: file size " + std::to_string(buf.size()) +
                                     " is not a multiple of 3073: " + path);
        all.insert(all.end(), buf.begin(), buf.end());
    }
    const std::size_t n = all.size() / kRecord;
    Dataset ds;
    ds.name = "cifar10";
    ds.split = split;
    ds.num_classes = 10;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        ds.labels[i] = rec[0];
        for (std::size_t p = 0; p < kPixels; ++p)
            ds.images[i * kPixels + p] = static_cast<double>(rec[1 + p]) / 255.0;
    }
    ds.validate();
    return ds;
}

Dataset load_cifar10_binary(const std::string& dir, const std::string& split) {
    namespace fs = std::filesystem;
    if (fs::is_regular_file(dir)) return load_cifar10_files({dir}, split);
    std::vector<std::string> files;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i) {
            fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
            if (fs::exists(p)) files.push_back(p.string());
        }
    } else {
        fs::path p = fs::path(dir) / "test_batch.bin";
        if (fs::exists(p)) files.push_back(p.string());
    }
    if (files.empty())
        throw std::runtime_error("cifar10: no batch files for split '" + split + "' under " +
                                 dir);
    return load_cifar10_files(files, split);
}

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed, bool stratified) {
    if (n > ds.size())
        throw std::invalid_argument("subsample: requested " + std::to_string(n) +
                                    " of " + std::to_string(ds.size()) + " samples");
    Rng rng(substream_seed(seed, "subsample"));
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    if (!stratified) {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.below(i + 1)]);
        chosen.assign(idx.begin(), idx.begin() + n);
    } else {
        std::vector<std::vector<std::size_t>> groups(ds.num_classes);
        for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.labels[i]].push_back(i);
        for (auto& grp : groups)
            for (std::size_t i = grp.size(); i > 1; --i)
                std::swap(grp[i - 1], grp[rng.below(i)]);
        // proportional quota, remainder assigned in class order
        std::vector<std::size_t> quota(groups.size(), 0);
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < groups.size(); ++c) {
            quota[c] = n * groups[c].size() / ds.size();
            assigned += quota[c];
        }
        for (std::size_t c = 0; assigned < n; c = (c + 1) % groups.size()) {
            if (quota[c] < groups[c].size()) {
                ++quota[c];
                ++assigned;
            }
        }
        for (std::size_t c = 0; c < groups.size(); ++c)
            chosen.insert(chosen.end(), groups[c].begin(), groups[c].begin() + quota[c]);
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    out.name = ds.name;
    out.split = ds.split + "-sub" + std::to_string(n);
    out.num_classes = ds.num_classes;
    out.images = ds.gather(chosen);
    out.labels.reserve(n);
    for (std::size_t i : chosen) out.labels.push_back(ds.labels[i]);
    return out;
}

namespace {

struct Bump {
    double cy, cx, sigma, amp;
};

std::vector<Bump> class_template(int cls, std::uint64_t seed) {
    Rng rng(substream_seed(seed, "template", static_cast<std::uint64_t>(cls)));
    std::vector<Bump> bumps(3);
    for (Bump& b : bumps) {
        b.cy = rng.uniform(7.0, 21.0);
        b.cx = rng.uniform(7.0, 21.0);
        b.sigma = rng.uniform(1.8, 3.4);
        b.amp = rng.uniform(0.65, 1.0);
    }
    return bumps;
}

} // namespace

Dataset make_mnist_like(std::size_t n, int classes, std::uint64_t seed,
                        const std::string& split) {
    if (n == 0) throw std::invalid_argument("make_mnist_like: empty dataset");
    const std::size_t H = 28, W = 28;
    std::vector<std::vector<Bump>> templates(classes);
    for (int c = 0; c < classes; ++c) templates[c] = class_template(c, seed);

    Dataset ds;
    ds.name = "mnist-like";
    ds.split = split;
    ds.num_classes = classes;
    ds.images = Tensor({n, 1, H, W});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % classes);
        ds.labels[i] = cls;
        Rng rng(substream_seed(seed, "sample-" + split, i));
        const double dy = std::floor(rng.uniform(-3.0, 4.0));
        const double dx = std::floor(rng.uniform(-3.0, 4.0));
        const double brightness = rng.uniform(0.65, 1.0);
        double* img = ds.images.data() + i * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double v = 0.0;
                for (const Bump& b : templates[cls]) {
                    const double ddy = static_cast<double>(y) - (b.cy + dy);
                    const double ddx = static_cast<double>(x) - (b.cx + dx);
                    v += b.amp * std::exp(-(ddy * ddy + ddx * ddx) / (2.0 * b.sigma * b.sigma));
                }
                v = brightness * v + 0.12 * rng.normal();
                img[y * W + x] = std::clamp(v, 0.0, 1.0);
            }
    }
    return ds;
}

std::vector<NamedFunction> synthetic_grounded_functions() {
    return {
        {"identity", [](double x) { return x; }},
        {"abs", [](double x) { return std::fabs(x); }},
        {"tanh", [](double x) { return std::tanh(x); }},
        {"xsin", [](double x) { return x * std::sin(3.0 * x); }},
        {"flat-relu", [](double x) { return std::min(std::max(0.0, x), 1.5); }},
    };
}

const NamedFunction& grounded_function(const std::string& name) {
    static const std::vector<NamedFunction> fns = synthetic_grounded_functions();
    for (const NamedFunction& f : fns)
        if (f.name == name) return f;
    throw std::invalid_argument("unknown target function: " + name);
}

} // namespace splashlab
