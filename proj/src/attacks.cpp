#include "splashlab/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "json.hpp"
#include "splashlab/rng.hpp"

namespace splashlab {

namespace {

int argmax_row(const Tensor& probs, std::size_t row = 0) {
    const std::size_t K = probs.dim(1);
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (probs[row * K + k] > probs[row * K + best]) best = k;
    return static_cast<int>(best);
}

double l2_dist(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double linf_dist(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void finish_result(SampleResult& r, const Tensor& original, const Tensor& probs) {
    r.adv_label = argmax_row(probs);
    const std::size_t K = probs.dim(1);
    r.z_true = probs[static_cast<std::size_t>(r.label)];
    r.z_adv = probs[static_cast<std::size_t>(r.adv_label)];
    (void)K;
    r.success = r.adv_label != r.label;
    r.perturbation_l2 = l2_dist(r.adversarial, original);
    r.perturbation_linf = linf_dist(r.adversarial, original);
}

// deterministic chunked parallel map over sample indices
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    unsigned hw = std::thread::hardware_concurrency();
    unsigned t = threads > 0 ? static_cast<unsigned>(threads) : (hw > 0 ? hw : 1);
    t = std::min<unsigned>(t, n == 0 ? 1 : static_cast<unsigned>(n));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < t; ++w)
        pool.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace

PredictFn make_predict_fn(Model& model) {
    model.eval_mode();
    return [&model](const Tensor& images) { return model.predict(images); };
}

const char* AttackConfig::method_name(Method m) {
    switch (m) {
        case Method::one_pixel: return "one-pixel";
        case Method::boundary: return "boundary";
        case Method::fgsm: return "fgsm";
        case Method::cw_l2: return "cw-l2";
    }
    return "?";
}

AttackConfig::Method AttackConfig::parse_method(const std::string& name) {
    if (name == "one-pixel" || name == "one_pixel") return Method::one_pixel;
    if (name == "boundary") return Method::boundary;
    if (name == "fgsm") return Method::fgsm;
    if (name == "cw-l2" || name == "cw_l2") return Method::cw_l2;
    throw std::invalid_argument("unknown attack method: " + name);
}

double AttackConfig::strength() const {
    if (method == Method::fgsm) return epsilon;
    if (method == Method::one_pixel) return static_cast<double>(pixels);
    return 0.0;
}

std::vector<double> de_mutate(const std::vector<double>& r1, const std::vector<double>& r2,
                              const std::vector<double>& r3, bool classic) {
    std::vector<double> out(r1.size());
    for (std::size_t i = 0; i < r1.size(); ++i)
        out[i] = classic ? r1[i] + 0.5 * (r2[i] - r3[i]) : r1[i] + 0.5 * (r2[i] + r3[i]);
    return out;
}

// ---------------------------------------------------------------------------
// one-pixel attack (differential evolution over k pixel modifications)

SampleResult one_pixel_attack(const PredictFn& predict, const Tensor& image, int label, int k,
                              const AttackConfig& cfg, std::uint64_t seed) {
    const std::size_t C = image.dim(1), H = image.dim(2), W = image.dim(3);
    if (k < 1 || static_cast<std::size_t>(k) > H * W)
        throw std::invalid_argument("one-pixel: k = " + std::to_string(k) +
                                    " exceeds the pixel count " + std::to_string(H * W));
    if (cfg.de_pop < 4)
        throw std::invalid_argument("one-pixel: population must be >= 4 for mutation");
    const std::size_t tuple = 2 + C; // row, col, one value per channel
    const std::size_t genes = static_cast<std::size_t>(k) * tuple;
    const std::size_t pop = static_cast<std::size_t>(cfg.de_pop);
    Rng rng(seed);

    auto clamp_genome = [&](std::vector<double>& g) {
        for (std::size_t p = 0; p < static_cast<std::size_t>(k); ++p) {
            double* t = g.data() + p * tuple;
            t[0] = std::clamp(t[0], 0.0, static_cast<double>(H - 1));
            t[1] = std::clamp(t[1], 0.0, static_cast<double>(W - 1));
            for (std::size_t c = 0; c < C; ++c) t[2 + c] = std::clamp(t[2 + c], 0.0, 1.0);
        }
    };
    auto apply_genome = [&](const std::vector<double>& g, double* dst) {
        std::copy(image.data(), image.data() + image.size(), dst);
        for (std::size_t p = 0; p < static_cast<std::size_t>(k); ++p) {
            const double* t = g.data() + p * tuple;
            auto r = static_cast<std::size_t>(std::lround(t[0]));
            auto c = static_cast<std::size_t>(std::lround(t[1]));
            r = std::min(r, H - 1);
            c = std::min(c, W - 1);
            for (std::size_t ch = 0; ch < C; ++ch) dst[(ch * H + r) * W + c] = t[2 + ch];
        }
    };

    std::vector<std::vector<double>> genomes(pop, std::vector<double>(genes));
    for (auto& g : genomes)
        for (std::size_t p = 0; p < static_cast<std::size_t>(k); ++p) {
            double* t = g.data() + p * tuple;
            t[0] = rng.uniform(0.0, static_cast<double>(H - 1));
            t[1] = rng.uniform(0.0, static_cast<double>(W - 1));
            for (std::size_t c = 0; c < C; ++c) t[2 + c] = rng.uniform();
        }

    SampleResult result;
    result.label = label;
    long queries = 0;

    // fitness = softmax confidence of the true class, to be minimized
    std::vector<double> fitness(pop);
    std::vector<int> top(pop);
    auto evaluate = [&](const std::vector<std::vector<double>>& gs, std::vector<double>& fit,
                        std::vector<int>& arg) {
        Tensor batch({gs.size(), C, H, W});
        for (std::size_t i = 0; i < gs.size(); ++i)
            apply_genome(gs[i], batch.data() + i * image.size());
        Tensor probs = predict(batch);
        queries += static_cast<long>(gs.size());
        for (std::size_t i = 0; i < gs.size(); ++i) {
            fit[i] = probs[i * probs.dim(1) + static_cast<std::size_t>(label)];
            arg[i] = argmax_row(probs, i);
        }
    };

    evaluate(genomes, fitness, top);
    auto best_of = [&]() {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pop; ++i)
            if (fitness[i] < fitness[best]) best = i; // ties keep the earlier index
        return best;
    };

    std::size_t best = best_of();
    for (int iter = 0; iter < cfg.de_iters && top[best] == label; ++iter) {
        std::vector<std::vector<double>> children(pop);
        for (std::size_t i = 0; i < pop; ++i) {
            std::size_t r1 = rng.below(pop), r2, r3;
            do r2 = rng.below(pop);
            while (r2 == r1);
            do r3 = rng.below(pop);
            while (r3 == r1 || r3 == r2);
            children[i] = de_mutate(genomes[r1], genomes[r2], genomes[r3], cfg.de_classic);
            clamp_genome(children[i]);
        }
        std::vector<double> child_fit(pop);
        std::vector<int> child_top(pop);
        evaluate(children, child_fit, child_top);
        for (std::size_t i = 0; i < pop; ++i) {
            if (child_fit[i] < fitness[i]) { // kept only if it lowered the confidence
                genomes[i] = std::move(children[i]);
                fitness[i] = child_fit[i];
                top[i] = child_top[i];
            }
        }
        best = best_of();
    }

    result.adversarial = Tensor({1, C, H, W});
    apply_genome(genomes[best], result.adversarial.data());
    Tensor probs = predict(result.adversarial);
    ++queries;
    result.queries = queries;
    finish_result(result, image, probs);
    return result;
}

// ---------------------------------------------------------------------------
// boundary attack (decision-based random walk along the class boundary)

SampleResult boundary_attack(const PredictFn& predict, const Tensor& image, int label,
                             const AttackConfig& cfg, std::uint64_t seed,
                             BoundaryObserver* observer) {
    Rng rng(seed);
    const std::size_t n = image.size();
    SampleResult result;
    result.label = label;
    long queries = 0;

    auto is_adversarial = [&](const Tensor& x) {
        Tensor probs = predict(x);
        ++queries;
        return argmax_row(probs) != label;
    };

    // already misclassified: the original image itself is adversarial
    if (is_adversarial(image)) {
        result.adversarial = image;
        Tensor probs = predict(image);
        result.queries = queries + 1;
        finish_result(result, image, probs);
        return result;
    }

    // init from clipped Gaussian noise until misclassified
    Tensor x_adv(image.shape());
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
        for (std::size_t i = 0; i < n; ++i) x_adv[i] = std::clamp(rng.normal(), 0.0, 1.0);
        found = is_adversarial(x_adv);
    }
    if (!found) {
        result.adversarial = image;
        result.success = false;
        result.queries = queries;
        result.adv_label = label;
        return result;
    }

    double dist = l2_dist(image, x_adv);
    const double initial_dist = dist;
    double spherical_step = 0.01, source_step = 0.01;
    int orth_window = 0, orth_accepts = 0;
    int src_window = 0, src_accepts = 0;

    Tensor candidate(image.shape());
    for (int step = 0; step < cfg.boundary_steps; ++step) {
        // orthogonal proposal on the sphere of radius dist around the original
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            candidate[i] = rng.normal();
            norm += candidate[i] * candidate[i];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double scale = spherical_step * dist / norm;
        for (std::size_t i = 0; i < n; ++i) candidate[i] = x_adv[i] + scale * candidate[i];
        double to_orig = l2_dist(image, candidate);
        if (to_orig == 0.0) continue;
        const double proj = dist / to_orig;
        for (std::size_t i = 0; i < n; ++i) {
            candidate[i] = image[i] + proj * (candidate[i] - image[i]);
            candidate[i] = std::clamp(candidate[i], 0.0, 1.0);
        }

        ++orth_window;
        bool orth_ok = is_adversarial(candidate);
        if (orth_ok) {
            ++orth_accepts;
            // inward move toward the original
            Tensor inward(image.shape());
            for (std::size_t i = 0; i < n; ++i) {
                inward[i] = candidate[i] + source_step * (image[i] - candidate[i]);
                inward[i] = std::clamp(inward[i], 0.0, 1.0);
            }
            ++src_window;
            const Tensor& accepted = is_adversarial(inward) ? (++src_accepts, inward) : candidate;
            double new_dist = l2_dist(image, accepted);
            if (new_dist <= dist) { // sphere projection + inward step guarantee this
                x_adv = accepted;
                dist = new_dist;
                if (observer) observer->on_accept(x_adv, dist);
            } else if (new_dist > dist * (1.0 + 1e-9)) {
                result.distance_monotone = false; // construction violated, never expected
            }
        }

        if (orth_window >= 10) {
            spherical_step *= (orth_accepts > orth_window / 2) ? 1.3 : 0.7;
            spherical_step = std::clamp(spherical_step, 1e-7, 1.0);
            orth_window = orth_accepts = 0;
        }
        if (src_window >= 10) {
            source_step *= (4 * src_accepts > src_window) ? 1.3 : 0.7;
            source_step = std::clamp(source_step, 1e-9, 1.0);
            src_window = src_accepts = 0;
        }
    }

    result.adversarial = x_adv;
    Tensor probs = predict(x_adv);
    ++queries;
    result.queries = queries;
    result.adv_label = argmax_row(probs);
    result.z_true = probs[static_cast<std::size_t>(label)];
    result.z_adv = probs[static_cast<std::size_t>(result.adv_label)];
    result.perturbation_l2 = dist;
    result.perturbation_linf = linf_dist(image, x_adv);
    result.success =
        result.adv_label != label && dist < cfg.boundary_success_ratio * initial_dist;
    return result;
}

// ---------------------------------------------------------------------------
// fgsm (single gradient-sign step, epsilon ball + box projection)

SampleResult fgsm_attack(Model& model, const Tensor& image, int label, double eps,
                         const AttackConfig& cfg, std::uint64_t seed) {
    if (eps < 0.0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
    model.eval_mode();
    Rng rng(seed);
    const std::size_t n = image.size();

    Tensor start = image;
    if (cfg.fgsm_random_start && eps > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            start[i] = std::clamp(start[i] + rng.uniform(-eps, eps), 0.0, 1.0);

    Graph g;
    ForwardContext ctx(g, model, /*training=*/false, /*param_grads=*/false);
    Value in = g.leaf(start, true);
    Value loss = g.cross_entropy(model.forward_logits(ctx, in), {label});
    g.backward(loss);
    const Tensor& grad = g.grad(in);

    SampleResult result;
    result.label = label;
    result.adversarial = Tensor(image.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        double v = start[i] + eps * s;
        v = std::clamp(v, image[i] - eps, image[i] + eps); // stay in the attack ball
        result.adversarial[i] = std::clamp(v, 0.0, 1.0);
    }
    Tensor probs = model.predict(result.adversarial);
    result.queries = 2;
    finish_result(result, image, probs);
    return result;
}

// ---------------------------------------------------------------------------
// cw-l2 (tanh-space box constraint, binary search over the trade-off c)

SampleResult cw_l2_attack(Model& model, const Tensor& image, int label,
                          const AttackConfig& cfg, std::uint64_t seed) {
    (void)seed; // the optimization itself is deterministic
    model.eval_mode();
    const std::size_t n = image.size();
    SampleResult result;
    result.label = label;

    {
        Tensor probs = model.predict(image);
        if (argmax_row(probs) != label) {
            result.adversarial = image;
            result.queries = 1;
            finish_result(result, image, probs);
            return result;
        }
    }

    Tensor w0(image.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double x = std::clamp(image[i], 1e-6, 1.0 - 1e-6);
        w0[i] = std::atanh(2.0 * x - 1.0);
    }

    Tensor best_adv;
    double best_l2 = std::numeric_limits<double>::infinity();
    long queries = 0;

    double c = cfg.cw_c_init, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int bs = 0; bs < cfg.cw_bsearch; ++bs) {
        Tensor w = w0;
        Tensor m_t(w.shape()), v_t(w.shape()); // adam state
        bool success_at_c = false;
        for (int it = 1; it <= cfg.cw_steps; ++it) {
            Graph g;
            ForwardContext ctx(g, model, false, false);
            Value vw = g.leaf(w, true);
            Value x_adv = g.mul_scalar(g.add_scalar(g.tanh(vw), 1.0), 0.5);
            Value logits = model.forward_logits(ctx, x_adv);
            const Tensor& lv = g.value(logits);
            // strongest wrong class under the current iterate
            std::size_t t_star = label == 0 ? 1 : 0;
            for (std::size_t t = 0; t < lv.dim(1); ++t)
                if (t != static_cast<std::size_t>(label) && lv[t] > lv[t_star]) t_star = t;

            Value delta = g.sub(x_adv, g.leaf(image, false));
            Value l2 = g.sum(g.mul(delta, delta));
            Value margin = g.relu(g.sub(g.pick(logits, static_cast<std::size_t>(label)),
                                        g.pick(logits, t_star)));
            Value loss = g.add(l2, g.mul_scalar(margin, c));
            g.backward(loss);
            ++queries;

            if (lv[t_star] > lv[static_cast<std::size_t>(label)]) {
                success_at_c = true;
                double cur = std::sqrt(g.value(l2)[0]);
                if (cur < best_l2) {
                    best_l2 = cur;
                    best_adv = g.value(x_adv);
                }
            }

            const Tensor& gw = g.grad(vw);
            const double b1 = 0.9, b2 = 0.999;
            const double bc1 = 1.0 - std::pow(b1, it), bc2 = 1.0 - std::pow(b2, it);
            for (std::size_t i = 0; i < n; ++i) {
                m_t[i] = b1 * m_t[i] + (1.0 - b1) * gw[i];
                v_t[i] = b2 * v_t[i] + (1.0 - b2) * gw[i] * gw[i];
                w[i] -= cfg.cw_lr * (m_t[i] / bc1) / (std::sqrt(v_t[i] / bc2) + 1e-8);
            }
        }
        if (success_at_c) {
            hi = c;
            c = 0.5 * (lo + hi);
        } else {
            lo = c;
            c = std::isinf(hi) ? c * 10.0 : 0.5 * (lo + hi);
        }
    }

    if (best_adv.size() == 0) {
        // no misclassification found at any c
        result.adversarial = image;
        result.success = false;
        result.adv_label = label;
        result.queries = queries;
        return result;
    }
    result.adversarial = Tensor({1, image.dim(1), image.dim(2), image.dim(3)}, best_adv.vec());
    Tensor probs = model.predict(result.adversarial);
    result.queries = queries + 1;
    finish_result(result, image, probs);
    return result;
}

// ---------------------------------------------------------------------------
// campaigns

AttackReport run_attack(Model& model, const std::string& model_name,
                        const std::string& activation, const Dataset& subset,
                        const AttackConfig& config) {
    if (subset.size() == 0) throw std::invalid_argument("attack: empty sample subset");
    if (config.repeats < 1) throw std::invalid_argument("attack: repeats must be >= 1");
    model.eval_mode();
    PredictFn predict = make_predict_fn(model);

    AttackReport report;
    report.model_name = model_name;
    report.activation = activation;
    report.config = config;
    report.strength = config.strength();
    report.sample_count = subset.size();

    for (int r = 0; r < config.repeats; ++r) {
        RepeatResult rep;
        rep.repeat = r;
        rep.seed = substream_seed(config.seed, "attack", static_cast<std::uint64_t>(r));
        rep.samples.resize(subset.size());
        parallel_for(subset.size(), config.threads, [&](std::size_t i) {
            std::uint64_t s = substream_seed(rep.seed, "sample", i);
            Tensor image = subset.image(i);
            int label = subset.labels[i];
            SampleResult sr;
            switch (config.method) {
                case AttackConfig::Method::one_pixel:
                    sr = one_pixel_attack(predict, image, label, config.pixels, config, s);
                    break;
                case AttackConfig::Method::boundary:
                    sr = boundary_attack(predict, image, label, config, s);
                    break;
                case AttackConfig::Method::fgsm:
                    sr = fgsm_attack(model, image, label, config.epsilon, config, s);
                    break;
                case AttackConfig::Method::cw_l2:
                    sr = cw_l2_attack(model, image, label, config, s);
                    break;
            }
            sr.index = i;
            rep.samples[i] = std::move(sr);
        });

        double margin_sum = 0.0;
        int fooled = 0;
        for (SampleResult& sr : rep.samples) {
            if (!sr.success) continue;
            // reload the stored adversarial image and re-verify the flip
            Tensor probs = model.predict(sr.adversarial);
            int lbl = argmax_row(probs);
            if (lbl == sr.label)
                throw std::runtime_error(
                    "attack verification failed: stored adversarial image for sample " +
                    std::to_string(sr.index) + " no longer flips the prediction");
            sr.adv_label = lbl;
            sr.z_true = probs[static_cast<std::size_t>(sr.label)];
            sr.z_adv = probs[static_cast<std::size_t>(lbl)];
            ++report.verified_successes;
            ++fooled;
            margin_sum += std::fabs(sr.z_true - sr.z_adv);
        }
        rep.successes = fooled;
        rep.margin_mean = fooled > 0 ? margin_sum / fooled : 0.0;
        report.repeats.push_back(std::move(rep));
    }

    double mean = 0.0;
    for (const RepeatResult& rep : report.repeats) mean += rep.successes;
    mean /= report.repeats.size();
    double var = 0.0;
    for (const RepeatResult& rep : report.repeats) {
        double d = rep.successes - mean;
        var += d * d;
    }
    report.mean_successes = mean;
    report.std_successes = std::sqrt(var / report.repeats.size());

    double pooled = 0.0;
    int pooled_n = 0;
    for (const RepeatResult& rep : report.repeats)
        for (const SampleResult& sr : rep.samples)
            if (sr.success) {
                pooled += std::fabs(sr.z_true - sr.z_adv);
                ++pooled_n;
            }
    report.avg_margin = pooled_n > 0 ? pooled / pooled_n : 0.0;
    return report;
}

std::vector<AttackReport> run_campaign(const std::vector<CampaignModel>& models,
                                       const Dataset& subset,
                                       const std::vector<AttackConfig>& configs) {
    if (subset.size() == 0) throw std::invalid_argument("campaign: empty sample subset");
    std::vector<AttackReport> reports;
    for (const CampaignModel& m : models)
        for (const AttackConfig& cfg : configs)
            reports.push_back(run_attack(*m.model, m.name, m.activation, subset, cfg));
    return reports;
}

std::pair<double, double> paired_margin(const AttackReport& a, const AttackReport& b) {
    double sa = 0.0, sb = 0.0;
    int count = 0;
    const std::size_t reps = std::min(a.repeats.size(), b.repeats.size());
    for (std::size_t r = 0; r < reps; ++r) {
        const auto& ra = a.repeats[r].samples;
        const auto& rb = b.repeats[r].samples;
        const std::size_t ns = std::min(ra.size(), rb.size());
        for (std::size_t i = 0; i < ns; ++i) {
            if (!ra[i].success || !rb[i].success) continue; // both networks fooled
            sa += std::fabs(ra[i].z_true - ra[i].z_adv);
            sb += std::fabs(rb[i].z_true - rb[i].z_adv);
            ++count;
        }
    }
    if (count == 0) return {0.0, 0.0};
    return {sa / count, sb / count};
}

std::string report_to_json(const AttackReport& report) {
    nlohmann::json j;
    j["model"] = report.model_name;
    j["activation"] = report.activation;
    j["method"] = AttackConfig::method_name(report.config.method);
    j["strength"] = report.strength;
    j["sample_count"] = report.sample_count;
    j["mean_successes"] = report.mean_successes;
    j["std_successes"] = report.std_successes;
    j["avg_margin"] = report.avg_margin;
    j["verified_successes"] = report.verified_successes;
    j["config"] = {{"seed", report.config.seed},
                   {"repeats", report.config.repeats},
                   {"pixels", report.config.pixels},
                   {"de_iters", report.config.de_iters},
                   {"de_pop", report.config.de_pop},
                   {"de_classic", report.config.de_classic},
                   {"epsilon", report.config.epsilon},
                   {"fgsm_random_start", report.config.fgsm_random_start},
                   {"boundary_steps", report.config.boundary_steps},
                   {"boundary_success_ratio", report.config.boundary_success_ratio},
                   {"cw_bsearch", report.config.cw_bsearch},
                   {"cw_steps", report.config.cw_steps}};
    nlohmann::json reps = nlohmann::json::array();
    for (const RepeatResult& rep : report.repeats) {
        nlohmann::json rj;
        rj["repeat"] = rep.repeat;
        rj["seed"] = rep.seed;
        rj["successes"] = rep.successes;
        rj["margin_mean"] = rep.margin_mean;
        nlohmann::json samples = nlohmann::json::array();
        for (const SampleResult& sr : rep.samples)
            samples.push_back({{"index", sr.index},
                               {"success", sr.success},
                               {"queries", sr.queries},
                               {"l2", sr.perturbation_l2},
                               {"linf", sr.perturbation_linf},
                               {"adv_label", sr.adv_label},
                               {"z_true", sr.z_true},
                               {"z_adv", sr.z_adv}});
        rj["samples"] = std::move(samples);
        reps.push_back(std::move(rj));
    }
    j["repeats"] = std::move(reps);
    return j.dump(2);
}

std::string reports_to_csv(const std::vector<AttackReport>& reports) {
    std::string out = "model,activation,method,strength,repeat,successes,margin\n";
    char buf[256];
    for (const AttackReport& rp : reports)
        for (const RepeatResult& rep : rp.repeats) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%d,%d,%.17g\n",
                          rp.model_name.c_str(), rp.activation.c_str(),
                          AttackConfig::method_name(rp.config.method), rp.strength,
                          rep.repeat, rep.successes, rep.margin_mean);
            out += buf;
        }
    return out;
}

} // namespace splashlab
