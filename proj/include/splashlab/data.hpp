#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splashlab/tensor.hpp"

namespace splashlab {

/// Images in [0,1] with integer labels; fully materialized in memory.
struct Dataset {
    Tensor images; // [N,C,H,W]
    std::vector<int> labels;
    std::string name;
    std::string split;
    int num_classes = 10;

    std::size_t size() const { return images.rank() == 4 ? images.dim(0) : 0; }
    std::size_t channels() const { return images.dim(1); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }
    std::size_t image_size() const { return channels() * height() * width(); }

    /// [1,C,H,W] copy of one image.
    Tensor image(std::size_t i) const;
    /// [B,C,H,W] batch gathered by index.
    Tensor gather(const std::vector<std::size_t>& idx) const;

    void validate() const; // pixel range, label range, count match
};

// IDX container (the MNIST file layout): big-endian magic, dimension sizes,
// then unsigned bytes. 0x00000803 for image files, 0x00000801 for label files.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name = "mnist", const std::string& split = "train");
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);

/// 3073-byte records: one label byte, then 3072 pixel bytes in CHW order.
Dataset load_cifar10_files(const std::vector<std::string>& files,
                           const std::string& split = "train");
/// `dir` layout: data_batch_1..5.bin for train, test_batch.bin for test.
Dataset load_cifar10_binary(const std::string& dir, const std::string& split = "train");

/// Deterministic subset; stratified sampling preserves class proportions.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed, bool stratified);

/// Hermetic 28x28 image generator: per-class templates made of a few Gaussian
/// bumps, with per-sample jitter, brightness and pixel noise. Train and test
/// splits share templates but draw independent samples.
Dataset make_mnist_like(std::size_t n, int classes, std::uint64_t seed,
                        const std::string& split);

struct NamedFunction {
    std::string name;
    std::function<double(double)> f;
};

/// Grounded (f(0)=0) targets used by the approximation experiments:
/// identity, abs, tanh, x*sin(3x), and a flattened relu that saturates at 1.5.
std::vector<NamedFunction> synthetic_grounded_functions();
const NamedFunction& grounded_function(const std::string& name);

} // namespace splashlab
