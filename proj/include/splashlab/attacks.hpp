#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splashlab/data.hpp"
#include "splashlab/nn.hpp"

namespace splashlab {

/// Black-box oracle surface: a batch of images in, softmax rows out. The
/// black-box attacks receive nothing else.
using PredictFn = std::function<Tensor(const Tensor&)>;

PredictFn make_predict_fn(Model& model);

struct AttackConfig {
    enum class Method { one_pixel, boundary, fgsm, cw_l2 };
    Method method = Method::fgsm;

    int pixels = 1; // one-pixel: k
    int de_iters = 40;
    int de_pop = 400;
    bool de_classic = false; // use the standard difference mutation instead

    double epsilon = 0.04; // fgsm strength
    bool fgsm_random_start = true;

    int boundary_steps = 6000;
    double boundary_success_ratio = 0.1; // success: final dist < ratio * initial dist

    int cw_bsearch = 7;
    int cw_steps = 1000;
    double cw_lr = 1e-2;
    double cw_c_init = 1e-2;

    std::uint64_t seed = 0;
    int repeats = 5;
    int threads = 0; // 0 = hardware concurrency

    static const char* method_name(Method m);
    static Method parse_method(const std::string& name);
    double strength() const; // eps for fgsm, k for one-pixel, 0 otherwise
};

struct SampleResult {
    std::size_t index = 0;
    int label = -1;
    bool success = false;
    long queries = 0;
    double perturbation_l2 = 0.0;
    double perturbation_linf = 0.0;
    Tensor adversarial; // [1,C,H,W]
    int adv_label = -1;
    double z_true = 0.0, z_adv = 0.0;
    bool distance_monotone = true; // boundary instrumentation
};

/// Mutation combining three distinct population members; the default is the
/// sum form x_r1 + 0.5*(x_r2 + x_r3), `classic` switches to x_r1 +
/// 0.5*(x_r2 - x_r3).
std::vector<double> de_mutate(const std::vector<double>& r1, const std::vector<double>& r2,
                              const std::vector<double>& r3, bool classic = false);

SampleResult one_pixel_attack(const PredictFn& predict, const Tensor& image, int label, int k,
                              const AttackConfig& cfg, std::uint64_t seed);

/// Observer for accepted random-walk iterates (used by verification tests).
struct BoundaryObserver {
    virtual ~BoundaryObserver() = default;
    virtual void on_accept(const Tensor& iterate, double distance) = 0;
};

SampleResult boundary_attack(const PredictFn& predict, const Tensor& image, int label,
                             const AttackConfig& cfg, std::uint64_t seed,
                             BoundaryObserver* observer = nullptr);

SampleResult fgsm_attack(Model& model, const Tensor& image, int label, double eps,
                         const AttackConfig& cfg, std::uint64_t seed);

SampleResult cw_l2_attack(Model& model, const Tensor& image, int label,
                          const AttackConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct RepeatResult {
    int repeat = 0;
    std::uint64_t seed = 0;
    std::vector<SampleResult> samples;
    int successes = 0;
    double margin_mean = 0.0; // |Z_true - Z_adv| over this repeat's fooled samples
};

struct AttackReport {
    std::string model_name;
    std::string activation;
    AttackConfig config;
    double strength = 0.0;
    std::vector<RepeatResult> repeats;
    double mean_successes = 0.0;
    double std_successes = 0.0; // population standard deviation over repeats
    double avg_margin = 0.0;    // pooled over all fooled samples
    std::size_t sample_count = 0;
    int verified_successes = 0; // every reported success re-verified on reload
};

/// Runs `config.repeats` independent repeats over the subset. Every reported
/// success is re-verified by re-running the model on the stored adversarial
/// image; a verification miss aborts the run.
AttackReport run_attack(Model& model, const std::string& model_name,
                        const std::string& activation, const Dataset& subset,
                        const AttackConfig& config);

struct CampaignModel {
    std::string name;
    std::string activation;
    Model* model = nullptr;
};

std::vector<AttackReport> run_campaign(const std::vector<CampaignModel>& models,
                                       const Dataset& subset,
                                       const std::vector<AttackConfig>& configs);

/// Margin restricted to samples fooled under both reports (matched by repeat
/// and sample index): first = report a's margin, second = report b's.
std::pair<double, double> paired_margin(const AttackReport& a, const AttackReport& b);

std::string report_to_json(const AttackReport& report);
std::string reports_to_csv(const std::vector<AttackReport>& reports);

} // namespace splashlab
