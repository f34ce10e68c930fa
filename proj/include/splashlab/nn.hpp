#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splashlab/activations.hpp"
#include "splashlab/data.hpp"
#include "splashlab/graph.hpp"
#include "splashlab/rng.hpp"

namespace splashlab {

struct Param {
    std::string name;
    Tensor value;
    Tensor velocity;
    bool trainable = true;
};

enum class Mode { train, eval };

class Model;

/// Per-forward-pass state: one graph, lazily recorded parameter leaves.
struct ForwardContext {
    ForwardContext(Graph& graph, Model& model, bool training, bool param_grads = true);
    Graph& g;
    Model& model;
    bool training;
    bool param_grads;
    std::vector<Value> param_values;

    Value use_param(std::size_t index);
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }
    virtual void build(Model& m, Rng& init) = 0;
    virtual Value apply(ForwardContext& ctx, Value x) = 0;
    virtual void project_constraints(Model&) {}

private:
    std::string name_;
};

class DenseLayer : public Layer {
public:
    DenseLayer(std::size_t in, std::size_t out) : in_(in), out_(out) {}
    std::string kind() const override { return "dense"; }
    void build(Model& m, Rng& init) override;
    Value apply(ForwardContext& ctx, Value x) override;
    std::size_t out_units() const { return out_; }

private:
    std::size_t in_, out_;
    std::size_t w_ = 0, b_ = 0;
};

class Conv2DLayer : public Layer {
public:
    Conv2DLayer(std::size_t in_ch, std::size_t out_ch, std::size_t k)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k) {}
    std::string kind() const override { return "conv2d"; }
    void build(Model& m, Rng& init) override;
    Value apply(ForwardContext& ctx, Value x) override;
    std::size_t out_channels() const { return out_ch_; }

private:
    std::size_t in_ch_, out_ch_, k_;
    std::size_t w_ = 0, b_ = 0;
};

class MaxPool2x2Layer : public Layer {
public:
    std::string kind() const override { return "maxpool2x2"; }
    void build(Model&, Rng&) override {}
    Value apply(ForwardContext& ctx, Value x) override;
};

class FlattenLayer : public Layer {
public:
    std::string kind() const override { return "flatten"; }
    void build(Model&, Rng&) override {}
    Value apply(ForwardContext& ctx, Value x) override;
};

class SoftmaxLayer : public Layer {
public:
    std::string kind() const override { return "softmax"; }
    void build(Model&, Rng&) override {}
    Value apply(ForwardContext& ctx, Value x) override;
};

class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(std::size_t dim, double eps = 1e-5, double momentum = 0.9)
        : dim_(dim), eps_(eps), momentum_(momentum) {}
    std::string kind() const override { return "batchnorm"; }
    void build(Model& m, Rng&) override;
    Value apply(ForwardContext& ctx, Value x) override;
    std::size_t dim() const { return dim_; }

private:
    std::size_t dim_;
    double eps_, momentum_;
    std::size_t gamma_ = 0, beta_ = 0, rmean_ = 0, rvar_ = 0;
};

class ActivationLayer : public Layer {
public:
    /// `width` is the unit (dense) or channel (conv) count of the preceding
    /// layer; it sizes per-neuron slope matrices.
    ActivationLayer(ActivationKind kind_, std::size_t width)
        : kind_inst_(std::move(kind_)), width_(width) {}
    std::string kind() const override { return "activation"; }
    void build(Model& m, Rng&) override;
    Value apply(ForwardContext& ctx, Value x) override;
    void project_constraints(Model& m) override;

    const ActivationKind& activation() const { return kind_inst_; }
    bool is_splash() const { return kind_inst_.tag == ActivationKind::Tag::splash; }
    /// Current slope state as a per-layer spec (per-neuron slopes are averaged
    /// across units).
    PiecewiseLinearSpec current_spec(const Model& m) const;

private:
    ActivationKind kind_inst_;
    std::size_t width_;
    std::size_t pos_ = 0, neg_ = 0, prelu_alpha_ = 0, apl_slopes_ = 0;
};

// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 10;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-6;
    std::uint64_t seed = 0;
    enum class Augment { none, flip_translate } augmentation = Augment::none;
    int max_translate = 5;

    void validate() const;
};

class Model {
public:
    Model() = default;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    void add_layer(std::unique_ptr<Layer> layer);
    /// Registers and initializes parameters. Verifies that every SPLASH-style
    /// activation is directly preceded by a batchnorm unless
    /// `allow_unnormalized` is set.
    void finalize(std::uint64_t init_seed, bool allow_unnormalized = false);
    bool finalized() const { return finalized_; }

    std::size_t add_param(std::string name, Tensor value, bool trainable);
    Param& param(std::size_t i) { return params_[i]; }
    const Param& param(std::size_t i) const { return params_[i]; }
    std::size_t registry_size() const { return params_.size(); }
    std::size_t trainable_scalar_count() const;

    void train_mode() { mode_ = Mode::train; }
    void eval_mode() { mode_ = Mode::eval; }
    Mode mode() const { return mode_; }

    /// Raw logits; a trailing softmax layer, if present, is skipped.
    Value forward_logits(ForwardContext& ctx, Value x);
    /// All layers, in order.
    Value forward(ForwardContext& ctx, Value x);

    /// Softmax probabilities [B,K] for a batch, in eval mode, without
    /// touching gradients or running statistics.
    Tensor predict(const Tensor& images);
    std::vector<int> predict_labels(const Tensor& images);
    double error_rate(const Dataset& ds, std::size_t batch = 256);

    std::vector<Tensor> collect_grads(const ForwardContext& ctx) const;
    void project_constraints();

    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
    std::vector<ActivationLayer*> splash_layers();

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Param> params_;
    Mode mode_ = Mode::train;
    bool finalized_ = false;
};

/// Momentum SGD with weight decay folded into the gradient, followed by the
/// activation-constraint projection.
void sgd_step(Model& model, const std::vector<Tensor>& grads, const TrainConfig& config);

// ---------------------------------------------------------------------------

struct ModelConfig {
    std::string arch = "mlp"; // mlp | lenet5-small
    std::size_t in_channels = 1, height = 28, width = 28;
    std::size_t classes = 10;
    std::vector<std::size_t> hidden = {256, 64, 32}; // mlp only
    ActivationKind activation = ActivationKind::relu();
    std::uint64_t init_seed = 0;
    bool allow_unnormalized = false;
};

Model build_reference_model(const ModelConfig& config);
/// The named desk-scale set: "mlp" and "lenet5-small".
std::vector<std::pair<std::string, Model>> build_reference_models(const ActivationKind& kind,
                                                                  std::uint64_t init_seed);

// ---------------------------------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double test_error = 0.0;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    std::vector<ShapeSnapshot> snapshots;
    std::string to_csv() const; // epoch,train_loss,test_error,wall_seconds
};

/// Full training run; deterministic in everything but wall_seconds for a
/// fixed config.seed.
TrainLog train_model(Model& model, const Dataset& train_set, const Dataset& test_set,
                     const TrainConfig& config, bool snapshot_shapes = false);

} // namespace splashlab
