#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plenopress/keyvalue.hpp"
#include "plenopress/layers.hpp"
#include "plenopress/tensor.hpp"

namespace plenopress {

inline constexpr double kSigmaMin = 0.11;
inline constexpr double kProbabilityFloor = 0x1p-50;
inline constexpr int kPriorMixtures = 3;
inline constexpr std::array<double, 6> kLambdas = {0.1, 0.05, 0.025, 0.01, 0.005, 0.001};

struct ModelConfig {
    int n = 128;  // latent channels
    int m = 192;  // hyper-latent channels
    int heads = 0;  // 0: nn::default_heads per attention module
    nn::AttentionScale scale = nn::AttentionScale::PerHead;
    std::uint64_t seed = 1;

    static ModelConfig canonical() { return {}; }
    static ModelConfig from_config(const KeyValueFile& kv);
    KeyValueFile to_config() const;
    int heads_for(int channels) const { return heads > 0 ? heads : nn::default_heads(channels); }
    void validate() const;
};

/// Per-channel logistic mixture for the hyper-latent.
template <typename T>
struct FactorizedPrior {
    int channels = 0;
    std::vector<T> logits, loc, log_scale;  // channels x kPriorMixtures

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        const std::vector<int> shape{channels, kPriorMixtures};
        f(prefix + ".logits", shape, logits);
        f(prefix + ".loc", shape, loc);
        f(prefix + ".log_scale", shape, log_scale);
    }
};

/// Main path: four down blocks (the third wrapped in global attention), hyper
/// path with two down and two up stages, causal context model, 1x1 entropy
/// parameter stack, and a mirrored synthesis transform.
template <typename T>
struct Model {
    ModelConfig config;
    nn::Rbnd<T> enc1, enc2;
    nn::GlobalAttention<T> enc3;
    nn::Rbnd<T> enc4;
    nn::Conv2d<T> henc1;
    nn::GlobalAttention<T> henc2;
    nn::Conv2d<T> henc3;
    nn::GlobalAttention<T> hdec1;
    nn::Conv2d<T> hdec2, hdec3;
    nn::Conv2d<T> context;
    nn::Conv2d<T> ep1, ep2, ep3;
    nn::Rbnu<T> dec1;
    nn::GlobalAttention<T> dec2;
    nn::Rbnu<T> dec3;
    nn::Conv2d<T> dec4;
    FactorizedPrior<T> prior;

    /// All-zero parameters of the right shapes.
    explicit Model(const ModelConfig& cfg);

    template <typename F>
    void visit(F&& f) {
        enc1.visit("enc1", f);
        enc2.visit("enc2", f);
        enc3.visit("enc3", f);
        enc4.visit("enc4", f);
        henc1.visit("henc1", f);
        henc2.visit("henc2", f);
        henc3.visit("henc3", f);
        hdec1.visit("hdec1", f);
        hdec2.visit("hdec2", f);
        hdec3.visit("hdec3", f);
        context.visit("context", f);
        ep1.visit("ep1", f);
        ep2.visit("ep2", f);
        ep3.visit("ep3", f);
        dec1.visit("dec1", f);
        dec2.visit("dec2", f);
        dec3.visit("dec3", f);
        dec4.visit("dec4", f);
        prior.visit("prior", f);
    }
    std::size_t parameter_count() const;
};

using ModelParams = Model<double>;
using ModelId = std::array<std::uint8_t, 16>;

/// Seeded initialization: He-uniform convolutions with zero bias, GDN beta 1
/// and gamma 1e-3 I, attention maps identity plus 1% noise. Every value is
/// representable in float so the 32-bit container is lossless.
ModelParams init_model(const ModelConfig& cfg);
Model<float> to_float(const ModelParams& params);

/// Binary container "FPPM" plus `<path>.manifest` (name, shape, crc32 per block).
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);
/// `.cfg` paths hold a ModelConfig and are initialized; anything else is a container.
ModelParams load_or_init_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelId model_id(const ModelParams& params);
std::string to_hex(const ModelId& id);

template <typename T>
struct Latents {
    Tensor<T> y, z;
};

template <typename T>
struct GaussianParams {
    Tensor<T> mu, sigma;
};

/// x is 3 x H x W in [0, 1] with H, W multiples of 64.
template <typename T>
Latents<T> forward_analysis(const Model<T>& model, const Tensor<T>& x, nn::AttentionStats* stats = nullptr);
template <typename T>
Tensor<T> analysis_transform(const Model<T>& model, const Tensor<T>& x, nn::AttentionStats* stats = nullptr);
template <typename T>
Tensor<T> hyper_analysis(const Model<T>& model, const Tensor<T>& y, nn::AttentionStats* stats = nullptr);
/// 2N-channel hyper features at the latent resolution.
template <typename T>
Tensor<T> hyper_synthesis(const Model<T>& model, const Tensor<T>& z_hat, nn::AttentionStats* stats = nullptr);
template <typename T>
Tensor<T> forward_synthesis(const Model<T>& model, const Tensor<T>& y_hat, nn::AttentionStats* stats = nullptr);

/// (mu, sigma) for all N channels at latent position (row, col). Reads y_hat
/// only at raster positions before (row, col); encoder and decoder both call
/// this exact function.
template <typename T>
void entropy_parameters_at(const Model<T>& model, const Tensor<T>& hyper, const Tensor<T>& y_hat, int row, int col,
                           T* mu, T* sigma);
template <typename T>
GaussianParams<T> entropy_parameters(const Model<T>& model, const Tensor<T>& z_hat, const Tensor<T>& y_hat);

enum class QuantizeMode { Round, Noise };

/// Round half away from zero.
double round_half_away(double v);

/// Round: round(y - mu) + mu with an offset, round(y) without. Noise: y + U(-0.5, 0.5).
template <typename T>
Tensor<T> quantize(const Tensor<T>& y, QuantizeMode mode, std::uint64_t seed = 0, const Tensor<T>* mu_offset = nullptr);

/// -log2 of the Gaussian mass of [v - 0.5, v + 0.5], floored at 2^-50.
double gaussian_bits(double v, double mu, double sigma);
/// d bits / d v and d bits / d sigma (zero where the floor is active).
void gaussian_bits_gradient(double v, double mu, double sigma, double& d_v, double& d_sigma);

template <typename T>
double rate_estimate(const Tensor<T>& y_hat, const GaussianParams<T>& gp);

/// Mixture CDF of channel c at v.
template <typename T>
double factorized_cdf(const FactorizedPrior<T>& prior, int channel, double v);
template <typename T>
double factorized_bits(const FactorizedPrior<T>& prior, int channel, double v);
template <typename T>
double rate_estimate_factorized(const Tensor<T>& z_hat, const FactorizedPrior<T>& prior);

/// (rate_y + rate_z) / pixel_count + lambda * 255^2 * MSE on [0, 1] pixels.
template <typename T>
double rd_loss(const Tensor<T>& x, const Tensor<T>& x_hat, double rate_y_bits, double rate_z_bits, double lambda,
               double pixel_count);

}  // namespace plenopress
