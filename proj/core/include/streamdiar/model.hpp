#pragma once

#include "streamdiar/autodiff.hpp"
#include "streamdiar/matrix.hpp"
#include "streamdiar/tensor_file.hpp"

#include <limits>
#include <string>
#include <vector>

namespace streamdiar {

// Left-context size meaning "keep everything".
inline constexpr index_t kInfiniteContext = std::numeric_limits<index_t>::max();

struct EncoderConfig {
    index_t n_layers = 4;
    index_t d_model = 256;
    index_t n_heads = 4;
    index_t d_ff = 1024;
    index_t input_dim = 345;
    index_t block_frames = 100;                  // W
    index_t context_blocks = kInfiniteContext;   // L

    void validate() const;
    index_t head_dim() const { return d_model / n_heads; }
};

// Desk-scale configuration used by training tests and the default CLI toy runs.
EncoderConfig desk_scale_config(index_t input_dim);

// Named parameter tensors, ordered deterministically:
//   proj.w, proj.b, proj.norm.g, proj.norm.b,
//   layer{i}.attn.{q,k,v,o}.{w,b}, layer{i}.ff.{1,2}.{w,b},
//   layer{i}.norm{1,2}.{g,b},
//   eda.enc.{wx,wh,b}, eda.dec.{wh,b}, eda.exist.{w,b}
template <typename T>
struct ModelParams {
    EncoderConfig config;
    std::vector<std::pair<std::string, Matrix<T>>> tensors;

    Matrix<T>& find(const std::string& name);
    const Matrix<T>& find(const std::string& name) const;
    index_t parameter_count() const;

    static ModelParams init(const EncoderConfig& config, std::uint64_t seed);
};

using ModelParamsF = ModelParams<float>;
using ModelParamsD = ModelParams<double>;

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params);

// Checkpoint round-trip. Hyperparameters travel as a meta tensor.
NamedTensors params_to_tensors(const ModelParamsF& params);
ModelParamsF params_from_tensors(const NamedTensors& tensors);
void save_checkpoint(const std::string& path, const ModelParamsF& params);
ModelParamsF load_checkpoint(const std::string& path);

// Parameter tensors registered on a tape, with structured views used by the
// forward passes.
template <typename T>
struct BoundModel {
    struct LayerVars {
        Var<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
        Var<T> ff1_w, ff1_b, ff2_w, ff2_b;
        Var<T> n1_g, n1_b, n2_g, n2_b;
    };

    EncoderConfig config;
    std::vector<std::pair<std::string, Var<T>>> vars;

    Var<T> proj_w, proj_b, proj_ng, proj_nb;
    std::vector<LayerVars> layers;
    Var<T> enc_wx, enc_wh, enc_b;
    Var<T> dec_wh, dec_b;
    Var<T> exist_w, exist_b;

    Var<T> find(const std::string& name) const;
};

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const ModelParams<T>& params);

} // namespace streamdiar
