#include "splashlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace splashlab {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'P', 'L', 'C', 'K', 'P', 'T', '1'};

json kind_to_json(const ActivationKind& kind) {
    json j;
    j["tag"] = kind.name();
    j["alpha"] = kind.alpha;
    j["beta"] = kind.beta;
    j["prelu_init"] = kind.prelu_init;
    j["sharing"] = kind.sharing == Sharing::per_neuron ? "per-neuron" : "per-layer";
    j["constraint"] = constraint_name(kind.constraint);
    if (kind.tag == ActivationKind::Tag::splash) {
        j["spec"] = {{"S", kind.spec.hinge_count()},
                     {"hinges", kind.spec.hinges()},
                     {"pos", kind.spec.pos_slopes()},
                     {"neg", kind.spec.neg_slopes()}};
    }
    if (kind.tag == ActivationKind::Tag::apl) j["apl_hinges"] = kind.apl_hinges;
    if (kind.tag == ActivationKind::Tag::frozen_shape) {
        j["shape_x"] = *kind.shape_x;
        j["shape_h"] = *kind.shape_h;
    }
    return j;
}

ActivationKind kind_from_json(const json& j) {
    const std::string tag = j.at("tag").get<std::string>();
    if (tag == "frozen-shape")
        return ActivationKind::frozen_shape(j.at("shape_x").get<std::vector<double>>(),
                                            j.at("shape_h").get<std::vector<double>>());
    ActivationKind kind;
    if (tag == "splash" || tag == "splash-positive" || tag == "splash-negative" ||
        tag == "fixed-splash") {
        const json& s = j.at("spec");
        PiecewiseLinearSpec spec = PiecewiseLinearSpec::fixed(
            s.at("S").get<int>(), s.at("hinges").get<std::vector<double>>(),
            s.at("pos").get<std::vector<double>>(), s.at("neg").get<std::vector<double>>());
        Sharing sharing = j.value("sharing", "per-layer") == std::string("per-neuron")
                              ? Sharing::per_neuron
                              : Sharing::per_layer;
        SplashConstraint c = SplashConstraint::none;
        std::string cn = j.value("constraint", "none");
        if (cn == "positive") c = SplashConstraint::positive;
        else if (cn == "negative") c = SplashConstraint::negative;
        else if (cn == "frozen") c = SplashConstraint::frozen;
        kind = ActivationKind::splash(std::move(spec), sharing, c);
    } else {
        kind = ActivationKind::parse(tag);
    }
    if (j.contains("alpha")) kind.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) kind.beta = j.at("beta").get<double>();
    if (j.contains("prelu_init")) kind.prelu_init = j.at("prelu_init").get<double>();
    if (j.contains("apl_hinges"))
        kind.apl_hinges = j.at("apl_hinges").get<std::vector<double>>();
    return kind;
}

json config_to_json_obj(const ModelConfig& c) {
    json j;
    j["arch"] = c.arch;
    j["in_channels"] = c.in_channels;
    j["height"] = c.height;
    j["width"] = c.width;
    j["classes"] = c.classes;
    j["hidden"] = c.hidden;
    j["activation"] = kind_to_json(c.activation);
    j["init_seed"] = c.init_seed;
    j["allow_unnormalized"] = c.allow_unnormalized;
    j["weight_init"] = "kaiming-uniform"; // assumption recorded with the artifact
    return j;
}

ModelConfig config_from_json_obj(const json& j) {
    ModelConfig c;
    c.arch = j.at("arch").get<std::string>();
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.height = j.at("height").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.activation = kind_from_json(j.at("activation"));
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.allow_unnormalized = j.value("allow_unnormalized", false);
    return c;
}

} // namespace

std::string activation_to_json(const ActivationKind& kind) { return kind_to_json(kind).dump(); }

ActivationKind activation_from_json(const std::string& text) {
    return kind_from_json(json::parse(text));
}

std::string model_config_to_json(const ModelConfig& config) {
    return config_to_json_obj(config).dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

void save_checkpoint(const Model& model, const ModelConfig& config, const std::string& path,
                     const std::string& provenance_json) {
    json header;
    header["config"] = config_to_json_obj(config);
    header["provenance"] = json::parse(provenance_json);
    json manifest = json::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < model.registry_size(); ++i) {
        const Param& p = model.param(i);
        manifest.push_back({{"name", p.name},
                            {"size", p.value.size()},
                            {"trainable", p.trainable}});
        total += p.value.size();
    }
    header["params"] = manifest;
    header["total_scalars"] = total;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, 8);
    std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < model.registry_size(); ++i) {
        const Tensor& t = model.param(i).value;
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint64_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), 8))
        throw std::runtime_error("checkpoint: truncated header in " + path);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len)))
        throw std::runtime_error("checkpoint: truncated header in " + path);
    json header = json::parse(text);

    LoadedModel loaded;
    loaded.header_json = text;
    loaded.config = config_from_json_obj(header.at("config"));
    loaded.model = build_reference_model(loaded.config);

    const json& manifest = header.at("params");
    if (manifest.size() != loaded.model.registry_size())
        throw std::runtime_error("checkpoint: registry mismatch (file has " +
                                 std::to_string(manifest.size()) + " tensors, model has " +
                                 std::to_string(loaded.model.registry_size()) + ")");
    for (std::size_t i = 0; i < loaded.model.registry_size(); ++i) {
        Tensor& t = loaded.model.param(i).value;
        if (manifest[i].at("size").get<std::size_t>() != t.size())
            throw std::runtime_error("checkpoint: tensor size mismatch for " +
                                     loaded.model.param(i).name);
        if (!in.read(reinterpret_cast<char*>(t.data()),
                     static_cast<std::streamsize>(t.size() * sizeof(double))))
            throw std::runtime_error("checkpoint: truncated parameter block in " + path);
    }
    loaded.model.eval_mode();
    return loaded;
}

} // namespace splashlab
