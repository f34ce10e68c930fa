#include "splashlab/nn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace splashlab {

ForwardContext::ForwardContext(Graph& graph, Model& model, bool training, bool param_grads)
    : g(graph), model(model), training(training), param_grads(param_grads),
      param_values(model.registry_size()) {}

Value ForwardContext::use_param(std::size_t index) {
    if (!param_values[index].valid()) {
        const Param& p = model.param(index);
        param_values[index] = g.leaf(p.value, p.trainable && param_grads);
    }
    return param_values[index];
}

// ---------------------------------------------------------------------------
// layers

namespace {

Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

} // namespace

void DenseLayer::build(Model& m, Rng& init) {
    w_ = m.add_param(name() + ".W", kaiming_uniform({in_, out_}, in_, init), true);
    b_ = m.add_param(name() + ".b", Tensor({out_}), true);
}

Value DenseLayer::apply(ForwardContext& ctx, Value x) {
    return ctx.g.add_rowvec(ctx.g.matmul(x, ctx.use_param(w_)), ctx.use_param(b_));
}

void Conv2DLayer::build(Model& m, Rng& init) {
    w_ = m.add_param(name() + ".W",
                     kaiming_uniform({out_ch_, in_ch_, k_, k_}, in_ch_ * k_ * k_, init), true);
    b_ = m.add_param(name() + ".b", Tensor({out_ch_}), true);
}

Value Conv2DLayer::apply(ForwardContext& ctx, Value x) {
    return ctx.g.add_chanvec(ctx.g.conv2d(x, ctx.use_param(w_)), ctx.use_param(b_));
}

Value MaxPool2x2Layer::apply(ForwardContext& ctx, Value x) { return ctx.g.maxpool2x2(x); }

Value FlattenLayer::apply(ForwardContext& ctx, Value x) {
    const Tensor& t = ctx.g.value(x);
    std::size_t rest = t.size() / t.dim(0);
    return ctx.g.reshape(x, {t.dim(0), rest});
}

Value SoftmaxLayer::apply(ForwardContext& ctx, Value x) { return ctx.g.softmax_rows(x); }

void BatchNormLayer::build(Model& m, Rng&) {
    gamma_ = m.add_param(name() + ".gamma", Tensor::full({dim_}, 1.0), true);
    beta_ = m.add_param(name() + ".beta", Tensor({dim_}), true);
    rmean_ = m.add_param(name() + ".running_mean", Tensor({dim_}), false);
    rvar_ = m.add_param(name() + ".running_var", Tensor::full({dim_}, 1.0), false);
}

Value BatchNormLayer::apply(ForwardContext& ctx, Value x) {
    return ctx.g.batchnorm(x, ctx.use_param(gamma_), ctx.use_param(beta_),
                           ctx.model.param(rmean_).value, ctx.model.param(rvar_).value,
                           ctx.training, eps_, momentum_);
}

void ActivationLayer::build(Model& m, Rng&) {
    using Tag = ActivationKind::Tag;
    const bool trainable = kind_inst_.has_trainable_slots();
    switch (kind_inst_.tag) {
        case Tag::splash: {
            const auto& spec = kind_inst_.spec;
            const std::size_t k = spec.hinges().size();
            if (kind_inst_.sharing == Sharing::per_layer) {
                pos_ = m.add_param(name() + ".pos", Tensor({k}, spec.pos_slopes()), trainable);
                neg_ = m.add_param(name() + ".neg", Tensor({k}, spec.neg_slopes()), trainable);
            } else {
                Tensor pos({k, width_}), neg({k, width_});
                for (std::size_t s = 0; s < k; ++s)
                    for (std::size_t u = 0; u < width_; ++u) {
                        pos[s * width_ + u] = spec.pos_slopes()[s];
                        neg[s * width_ + u] = spec.neg_slopes()[s];
                    }
                pos_ = m.add_param(name() + ".pos", std::move(pos), trainable);
                neg_ = m.add_param(name() + ".neg", std::move(neg), trainable);
            }
            break;
        }
        case Tag::prelu:
            prelu_alpha_ =
                m.add_param(name() + ".alpha", Tensor::scalar(kind_inst_.prelu_init), true);
            break;
        case Tag::apl:
            apl_slopes_ =
                m.add_param(name() + ".slopes", Tensor({kind_inst_.apl_hinges.size()}), true);
            break;
        default:
            break; // stateless
    }
}

Value ActivationLayer::apply(ForwardContext& ctx, Value x) {
    using Tag = ActivationKind::Tag;
    switch (kind_inst_.tag) {
        case Tag::splash:
            return splash_apply(ctx.g, x, ctx.use_param(pos_), ctx.use_param(neg_),
                                kind_inst_.spec.hinges(), kind_inst_.sharing);
        case Tag::prelu: return prelu_apply(ctx.g, x, ctx.use_param(prelu_alpha_));
        case Tag::apl:
            return apl_apply(ctx.g, x, ctx.use_param(apl_slopes_), kind_inst_.apl_hinges);
        default: return apply_fixed_activation(ctx.g, kind_inst_, x);
    }
}

void ActivationLayer::project_constraints(Model& m) {
    if (kind_inst_.tag != ActivationKind::Tag::splash) return;
    if (kind_inst_.constraint != SplashConstraint::positive &&
        kind_inst_.constraint != SplashConstraint::negative)
        return;
    Tensor& neg = m.param(neg_).value;
    const std::size_t stride = kind_inst_.sharing == Sharing::per_neuron ? width_ : 1;
    for (std::size_t u = 0; u < stride; ++u) {
        double& a1 = neg[u]; // first negative slope, row 0
        a1 = kind_inst_.constraint == SplashConstraint::negative ? std::max(0.0, a1)
                                                                 : std::min(0.0, a1);
    }
}

PiecewiseLinearSpec ActivationLayer::current_spec(const Model& m) const {
    if (kind_inst_.tag != ActivationKind::Tag::splash)
        throw std::logic_error("current_spec: not a splash layer");
    const auto& hinges = kind_inst_.spec.hinges();
    const std::size_t k = hinges.size();
    std::vector<double> pos(k), neg(k);
    const Tensor& pt = m.param(pos_).value;
    const Tensor& nt = m.param(neg_).value;
    if (kind_inst_.sharing == Sharing::per_layer) {
        pos.assign(pt.vec().begin(), pt.vec().end());
        neg.assign(nt.vec().begin(), nt.vec().end());
    } else {
        for (std::size_t s = 0; s < k; ++s) {
            double ps = 0.0, ns = 0.0;
            for (std::size_t u = 0; u < width_; ++u) {
                ps += pt[s * width_ + u];
                ns += nt[s * width_ + u];
            }
            pos[s] = ps / static_cast<double>(width_);
            neg[s] = ns / static_cast<double>(width_);
        }
    }
    return PiecewiseLinearSpec::fixed(kind_inst_.spec.hinge_count(), hinges, std::move(pos),
                                      std::move(neg));
}

// ---------------------------------------------------------------------------
// model

void Model::add_layer(std::unique_ptr<Layer> layer) {
    if (finalized_) throw std::logic_error("model: cannot add layers after finalize");
    if (layer->name().empty())
        layer->set_name(layer->kind() + std::to_string(layers_.size()));
    layers_.push_back(std::move(layer));
}

void Model::finalize(std::uint64_t init_seed, bool allow_unnormalized) {
    if (finalized_) throw std::logic_error("model: finalize called twice");
    if (!allow_unnormalized) {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto* act = dynamic_cast<ActivationLayer*>(layers_[i].get());
            if (!act) continue;
            using Tag = ActivationKind::Tag;
            Tag t = act->activation().tag;
            if (t != Tag::splash && t != Tag::frozen_shape) continue;
            if (i == 0 || layers_[i - 1]->kind() != "batchnorm")
                throw std::logic_error(
                    "model: fixed-hinge activation '" + act->name() +
                    "' needs a batchnorm directly before it (the hinges assume "
                    "normalized input); pass allow_unnormalized to override");
        }
    }
    Rng init(substream_seed(init_seed, "init"));
    for (auto& l : layers_) l->build(*this, init);
    finalized_ = true;
}

std::size_t Model::add_param(std::string name, Tensor value, bool trainable) {
    Param p;
    p.name = std::move(name);
    p.velocity = Tensor(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

std::size_t Model::trainable_scalar_count() const {
    std::size_t n = 0;
    for (const Param& p : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

Value Model::forward(ForwardContext& ctx, Value x) {
    if (!finalized_) throw std::logic_error("model: forward before finalize");
    Value v = x;
    for (auto& l : layers_) v = l->apply(ctx, v);
    return v;
}

Value Model::forward_logits(ForwardContext& ctx, Value x) {
    if (!finalized_) throw std::logic_error("model: forward before finalize");
    Value v = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i + 1 == layers_.size() && layers_[i]->kind() == "softmax") break;
        v = layers_[i]->apply(ctx, v);
    }
    return v;
}

Tensor Model::predict(const Tensor& images) {
    Graph g;
    ForwardContext ctx(g, *this, /*training=*/false, /*param_grads=*/false);
    Value logits = forward_logits(ctx, g.leaf(images, false));
    return g.value(g.softmax_rows(logits));
}

std::vector<int> Model::predict_labels(const Tensor& images) {
    Tensor probs = predict(images);
    const std::size_t B = probs.dim(0), K = probs.dim(1);
    std::vector<int> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (probs[b * K + k] > probs[b * K + best]) best = k;
        out[b] = static_cast<int>(best);
    }
    return out;
}

double Model::error_rate(const Dataset& ds, std::size_t batch) {
    std::size_t wrong = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        std::size_t stop = std::min(ds.size(), start + batch);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        std::vector<int> pred = predict_labels(ds.gather(idx));
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (pred[i] != ds.labels[idx[i]]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

std::vector<Tensor> Model::collect_grads(const ForwardContext& ctx) const {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (ctx.param_values[i].valid() && ctx.g.requires_grad(ctx.param_values[i]))
            grads.push_back(ctx.g.grad(ctx.param_values[i]));
        else
            grads.push_back(Tensor(params_[i].value.shape()));
    }
    return grads;
}

void Model::project_constraints() {
    for (auto& l : layers_) l->project_constraints(*this);
}

std::vector<ActivationLayer*> Model::splash_layers() {
    std::vector<ActivationLayer*> out;
    for (auto& l : layers_) {
        auto* act = dynamic_cast<ActivationLayer*>(l.get());
        if (act && act->is_splash()) out.push_back(act);
    }
    return out;
}

void sgd_step(Model& model, const std::vector<Tensor>& grads, const TrainConfig& config) {
    if (grads.size() != model.registry_size())
        throw std::invalid_argument("sgd_step: gradient list does not match registry");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Param& p = model.param(i);
        if (!p.trainable) continue;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double g = grads[i][j] + config.weight_decay * p.value[j];
            p.velocity[j] = config.momentum * p.velocity[j] + g;
            p.value[j] -= config.learning_rate * p.velocity[j];
        }
    }
    model.project_constraints();
}

// ---------------------------------------------------------------------------
// reference models

Model build_reference_model(const ModelConfig& config) {
    Model m;
    auto act = [&](std::size_t width) {
        return std::make_unique<ActivationLayer>(config.activation, width);
    };
    if (config.arch == "mlp") {
        std::size_t in = config.in_channels * config.height * config.width;
        m.add_layer(std::make_unique<FlattenLayer>());
        for (std::size_t h : config.hidden) {
            m.add_layer(std::make_unique<DenseLayer>(in, h));
            m.add_layer(std::make_unique<BatchNormLayer>(h));
            m.add_layer(act(h));
            in = h;
        }
        m.add_layer(std::make_unique<DenseLayer>(in, config.classes));
    } else if (config.arch == "lenet5-small") {
        std::size_t h = config.height, w = config.width;
        m.add_layer(std::make_unique<Conv2DLayer>(config.in_channels, 6, 5));
        m.add_layer(std::make_unique<BatchNormLayer>(6));
        m.add_layer(act(6));
        m.add_layer(std::make_unique<MaxPool2x2Layer>());
        h = (h - 4) / 2;
        w = (w - 4) / 2;
        m.add_layer(std::make_unique<Conv2DLayer>(6, 16, 5));
        m.add_layer(std::make_unique<BatchNormLayer>(16));
        m.add_layer(act(16));
        m.add_layer(std::make_unique<MaxPool2x2Layer>());
        h = (h - 4) / 2;
        w = (w - 4) / 2;
        const std::size_t flat = 16 * h * w;
        m.add_layer(std::make_unique<FlattenLayer>());
        m.add_layer(std::make_unique<DenseLayer>(flat, 120));
        m.add_layer(std::make_unique<BatchNormLayer>(120));
        m.add_layer(act(120));
        m.add_layer(std::make_unique<DenseLayer>(120, 84));
        m.add_layer(std::make_unique<BatchNormLayer>(84));
        m.add_layer(act(84));
        m.add_layer(std::make_unique<DenseLayer>(84, config.classes));
    } else {
        throw std::invalid_argument("unknown model architecture: " + config.arch);
    }
    m.finalize(config.init_seed, config.allow_unnormalized);
    return m;
}

std::vector<std::pair<std::string, Model>> build_reference_models(const ActivationKind& kind,
                                                                  std::uint64_t init_seed) {
    std::vector<std::pair<std::string, Model>> out;
    ModelConfig mlp;
    mlp.arch = "mlp";
    mlp.activation = kind;
    mlp.init_seed = init_seed;
    out.emplace_back("mlp", build_reference_model(mlp));
    ModelConfig lenet;
    lenet.arch = "lenet5-small";
    lenet.activation = kind;
    lenet.init_seed = init_seed;
    out.emplace_back("lenet5-small", build_reference_model(lenet));
    return out;
}

// ---------------------------------------------------------------------------
// training

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be positive");
    if (batch_size < 2)
        throw std::invalid_argument("train config: batch size must be >= 2 (batchnorm)");
    if (learning_rate <= 0.0)
        throw std::invalid_argument("train config: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train config: momentum must be in [0,1)");
    if (weight_decay < 0.0)
        throw std::invalid_argument("train config: weight decay must be non-negative");
    if (max_translate < 0 || max_translate > 27)
        throw std::invalid_argument("train config: bad max_translate");
}

namespace {

// horizontal flip then integer translation with zero fill
void augment_image(const double* src, double* dst, std::size_t C, std::size_t H,
                   std::size_t W, bool flip, int dy, int dx) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                long sy = static_cast<long>(y) - dy;
                long sx = static_cast<long>(x) - dx;
                double v = 0.0;
                if (sy >= 0 && sy < static_cast<long>(H) && sx >= 0 &&
                    sx < static_cast<long>(W)) {
                    std::size_t col = flip ? (W - 1 - static_cast<std::size_t>(sx))
                                           : static_cast<std::size_t>(sx);
                    v = src[(c * H + static_cast<std::size_t>(sy)) * W + col];
                }
                dst[(c * H + y) * W + x] = v;
            }
}

} // namespace

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,test_error,wall_seconds\n";
    for (const EpochStats& e : epochs) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.3f\n", e.epoch, e.train_loss,
                      e.test_error, e.wall_seconds);
        os << buf;
    }
    return os.str();
}

TrainLog train_model(Model& model, const Dataset& train_set, const Dataset& test_set,
                     const TrainConfig& config, bool snapshot_shapes) {
    config.validate();
    if (train_set.size() == 0) throw std::invalid_argument("train: empty dataset");
    train_set.validate();

    Rng shuffle_rng(substream_seed(config.seed, "shuffle"));
    Rng aug_rng(substream_seed(config.seed, "augment"));

    const std::size_t N = train_set.size();
    const std::size_t C = train_set.channels(), H = train_set.height(),
                      W = train_set.width();
    const std::size_t isz = train_set.image_size();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        model.train_mode();
        for (std::size_t i = N - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.below(i + 1)]);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < N; start += config.batch_size) {
            std::size_t stop = std::min(N, start + config.batch_size);
            std::size_t bs = stop - start;
            if (bs < 2) break; // a trailing singleton cannot be batch-normalized
            Tensor batch({bs, C, H, W});
            std::vector<int> labels(bs);
            for (std::size_t r = 0; r < bs; ++r) {
                const double* src = train_set.images.data() + order[start + r] * isz;
                double* dst = batch.data() + r * isz;
                if (config.augmentation == TrainConfig::Augment::flip_translate) {
                    bool flip = aug_rng.uniform() < 0.5;
                    int span = 2 * config.max_translate + 1;
                    int dy = static_cast<int>(aug_rng.below(span)) - config.max_translate;
                    int dx = static_cast<int>(aug_rng.below(span)) - config.max_translate;
                    augment_image(src, dst, C, H, W, flip, dy, dx);
                } else {
                    std::copy(src, src + isz, dst);
                }
                labels[r] = train_set.labels[order[start + r]];
            }
            Graph g;
            ForwardContext ctx(g, model, /*training=*/true);
            Value logits = model.forward_logits(ctx, g.leaf(std::move(batch), false));
            Value loss = g.cross_entropy(logits, labels);
            g.backward(loss);
            sgd_step(model, model.collect_grads(ctx), config);
            loss_sum += g.value(loss)[0] * static_cast<double>(bs);
            seen += bs;
        }

        model.eval_mode();
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.test_error = test_set.size() > 0 ? model.error_rate(test_set) : 0.0;
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(stats);

        if (snapshot_shapes) {
            for (ActivationLayer* act : model.splash_layers()) {
                PiecewiseLinearSpec spec = act->current_spec(model);
                auto [xs, hs] = snapshot_shape(spec, -5.0, 5.0, 101);
                ShapeSnapshot snap;
                snap.layer = act->name();
                snap.epoch = epoch;
                snap.x = std::move(xs);
                snap.h = std::move(hs);
                log.snapshots.push_back(std::move(snap));
            }
        }
    }
    model.eval_mode();
    return log;
}

} // namespace splashlab
