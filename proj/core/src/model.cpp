#include "streamdiar/model.hpp"

#include "streamdiar/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace streamdiar {

void EncoderConfig::validate() const {
    if (n_layers < 1) throw std::invalid_argument("encoder config: n_layers must be >= 1");
    if (d_model < 1 || n_heads < 1 || d_ff < 1 || input_dim < 1)
        throw std::invalid_argument("encoder config: dimensions must be positive");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("encoder config: d_model must be divisible by n_heads");
    if (block_frames < 1) throw std::invalid_argument("encoder config: block_frames must be >= 1");
    if (context_blocks < 0) throw std::invalid_argument("encoder config: context_blocks must be >= 0");
}

EncoderConfig desk_scale_config(index_t input_dim) {
    EncoderConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.d_ff = 64;
    cfg.input_dim = input_dim;
    cfg.block_frames = 10;
    cfg.context_blocks = 1;
    return cfg;
}

namespace {

template <typename T>
Matrix<T> glorot(index_t rows, index_t cols, Rng& rng) {
    Matrix<T> m(rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& v : m.storage()) v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * limit);
    return m;
}

} // namespace

template <typename T>
Matrix<T>& ModelParams<T>::find(const std::string& name) {
    for (auto& [n, m] : tensors)
        if (n == name) return m;
    throw std::out_of_range("model parameter not found: " + name);
}

template <typename T>
const Matrix<T>& ModelParams<T>::find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw std::out_of_range("model parameter not found: " + name);
}

template <typename T>
index_t ModelParams<T>::parameter_count() const {
    index_t n = 0;
    for (const auto& [name, m] : tensors) n += m.size();
    return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelParams<T> p;
    p.config = config;
    const index_t d = config.d_model;

    auto weight = [&](const std::string& name, index_t rows, index_t cols) {
        p.tensors.emplace_back(name, glorot<T>(rows, cols, rng));
    };
    auto zeros = [&](const std::string& name, index_t cols) {
        p.tensors.emplace_back(name, Matrix<T>::zeros(1, cols));
    };
    auto ones = [&](const std::string& name, index_t cols) {
        p.tensors.emplace_back(name, Matrix<T>::full(1, cols, T(1)));
    };

    weight("proj.w", config.input_dim, d);
    zeros("proj.b", d);
    ones("proj.norm.g", d);
    zeros("proj.norm.b", d);

    for (index_t i = 0; i < config.n_layers; ++i) {
        const std::string base = "layer" + std::to_string(i) + ".";
        for (const char* head : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
            weight(base + head + ".w", d, d);
            zeros(base + head + ".b", d);
        }
        weight(base + "ff.1.w", d, config.d_ff);
        zeros(base + "ff.1.b", config.d_ff);
        weight(base + "ff.2.w", config.d_ff, d);
        zeros(base + "ff.2.b", d);
        ones(base + "norm1.g", d);
        zeros(base + "norm1.b", d);
        ones(base + "norm2.g", d);
        zeros(base + "norm2.b", d);
    }

    weight("eda.enc.wx", d, 4 * d);
    weight("eda.enc.wh", d, 4 * d);
    zeros("eda.enc.b", 4 * d);
    weight("eda.dec.wh", d, 4 * d);
    zeros("eda.dec.b", 4 * d);
    weight("eda.exist.w", d, 1);
    zeros("eda.exist.b", 1);
    return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params) {
    ModelParams<To> out;
    out.config = params.config;
    out.tensors.reserve(params.tensors.size());
    for (const auto& [name, m] : params.tensors)
        out.tensors.emplace_back(name, cast_matrix<To>(m));
    return out;
}

NamedTensors params_to_tensors(const ModelParamsF& params) {
    NamedTensors t;
    MatrixF hp(1, 5);
    hp.at(0, 0) = static_cast<float>(params.config.n_layers);
    hp.at(0, 1) = static_cast<float>(params.config.d_model);
    hp.at(0, 2) = static_cast<float>(params.config.n_heads);
    hp.at(0, 3) = static_cast<float>(params.config.d_ff);
    hp.at(0, 4) = static_cast<float>(params.config.input_dim);
    t.put("meta.hparams", hp);
    for (const auto& [name, m] : params.tensors) t.put(name, m);
    return t;
}

ModelParamsF params_from_tensors(const NamedTensors& tensors) {
    const MatrixF& hp = tensors.get("meta.hparams");
    if (hp.rows() != 1 || hp.cols() != 5)
        throw std::runtime_error("checkpoint: meta.hparams must be 1x5");
    EncoderConfig cfg;
    cfg.n_layers = static_cast<index_t>(hp.at(0, 0));
    cfg.d_model = static_cast<index_t>(hp.at(0, 1));
    cfg.n_heads = static_cast<index_t>(hp.at(0, 2));
    cfg.d_ff = static_cast<index_t>(hp.at(0, 3));
    cfg.input_dim = static_cast<index_t>(hp.at(0, 4));
    cfg.validate();

    // Rebuild via init to get the canonical tensor list, then overwrite values.
    ModelParamsF p = ModelParamsF::init(cfg, 0);
    for (auto& [name, m] : p.tensors) {
        const MatrixF& src = tensors.get(name);
        if (!src.same_shape(m))
            throw std::runtime_error("checkpoint: tensor " + name + " has unexpected shape");
        m = src;
    }
    return p;
}

void save_checkpoint(const std::string& path, const ModelParamsF& params) {
    save_tensors(path, params_to_tensors(params));
}

ModelParamsF load_checkpoint(const std::string& path) {
    return params_from_tensors(load_tensors(path));
}

template <typename T>
Var<T> BoundModel<T>::find(const std::string& name) const {
    for (const auto& [n, v] : vars)
        if (n == name) return v;
    throw std::out_of_range("bound model tensor not found: " + name);
}

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const ModelParams<T>& params) {
    BoundModel<T> b;
    b.config = params.config;
    b.vars.reserve(params.tensors.size());
    for (const auto& [name, m] : params.tensors) b.vars.emplace_back(name, tape.param(m));

    b.proj_w = b.find("proj.w");
    b.proj_b = b.find("proj.b");
    b.proj_ng = b.find("proj.norm.g");
    b.proj_nb = b.find("proj.norm.b");
    b.layers.resize(static_cast<std::size_t>(params.config.n_layers));
    for (index_t i = 0; i < params.config.n_layers; ++i) {
        const std::string base = "layer" + std::to_string(i) + ".";
        auto& L = b.layers[static_cast<std::size_t>(i)];
        L.q_w = b.find(base + "attn.q.w");
        L.q_b = b.find(base + "attn.q.b");
        L.k_w = b.find(base + "attn.k.w");
        L.k_b = b.find(base + "attn.k.b");
        L.v_w = b.find(base + "attn.v.w");
        L.v_b = b.find(base + "attn.v.b");
        L.o_w = b.find(base + "attn.o.w");
        L.o_b = b.find(base + "attn.o.b");
        L.ff1_w = b.find(base + "ff.1.w");
        L.ff1_b = b.find(base + "ff.1.b");
        L.ff2_w = b.find(base + "ff.2.w");
        L.ff2_b = b.find(base + "ff.2.b");
        L.n1_g = b.find(base + "norm1.g");
        L.n1_b = b.find(base + "norm1.b");
        L.n2_g = b.find(base + "norm2.g");
        L.n2_b = b.find(base + "norm2.b");
    }
    b.enc_wx = b.find("eda.enc.wx");
    b.enc_wh = b.find("eda.enc.wh");
    b.enc_b = b.find("eda.enc.b");
    b.dec_wh = b.find("eda.dec.wh");
    b.dec_b = b.find("eda.dec.b");
    b.exist_w = b.find("eda.exist.w");
    b.exist_b = b.find("eda.exist.b");
    return b;
}

#define STREAMDIAR_MODEL_INSTANTIATE(T)                           \
    template struct ModelParams<T>;                               \
    template struct BoundModel<T>;                                \
    template BoundModel<T> bind_model(Tape<T>&, const ModelParams<T>&);

STREAMDIAR_MODEL_INSTANTIATE(float)
STREAMDIAR_MODEL_INSTANTIATE(double)

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

} // namespace streamdiar
