#include "plenopress/codec_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "plenopress/detmath.hpp"
#include "plenopress/error.hpp"

namespace plenopress {

using nn::ResamplerKind;

// ---- configuration ---------------------------------------------------------

ModelConfig ModelConfig::from_config(const KeyValueFile& kv) {
    ModelConfig cfg;
    cfg.n = static_cast<int>(kv.get_int_or("latent_channels", cfg.n));
    cfg.m = static_cast<int>(kv.get_int_or("hyper_channels", cfg.m));
    cfg.heads = static_cast<int>(kv.get_int_or("attention_heads", cfg.heads));
    const std::string scale = kv.find("attention_scale").value_or("per_head");
    if (scale == "per_head") cfg.scale = nn::AttentionScale::PerHead;
    else if (scale == "full") cfg.scale = nn::AttentionScale::Full;
    else throw ContractError("attention_scale must be per_head or full, got '" + scale + "'");
    cfg.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", static_cast<long long>(cfg.seed)));
    cfg.validate();
    return cfg;
}

KeyValueFile ModelConfig::to_config() const {
    KeyValueFile kv;
    kv.set("latent_channels", static_cast<long long>(n));
    kv.set("hyper_channels", static_cast<long long>(m));
    kv.set("attention_heads", static_cast<long long>(heads));
    kv.set("attention_scale", std::string(scale == nn::AttentionScale::Full ? "full" : "per_head"));
    kv.set("seed", static_cast<long long>(seed));
    return kv;
}

void ModelConfig::validate() const {
    if (n < 2 || m < 1) throw ContractError("model config: latent_channels must be >= 2 and hyper_channels >= 1");
    if (n % heads_for(n) != 0 || m % heads_for(m) != 0)
        throw ContractError("model config: channel counts must be divisible by the attention head count");
}

// ---- structure and initialization ------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& cfg)
    : config(cfg),
      enc1(3, cfg.n),
      enc2(cfg.n, cfg.n),
      enc3(ResamplerKind::Rbnd, cfg.n, cfg.heads_for(cfg.n), cfg.scale),
      enc4(cfg.n, cfg.n),
      henc1(cfg.n, cfg.m, 3, 1),
      henc2(ResamplerKind::Conv, cfg.m, cfg.heads_for(cfg.m), cfg.scale),
      henc3(cfg.m, cfg.m, 3, 2),
      hdec1(ResamplerKind::Subpixel, cfg.m, cfg.heads_for(cfg.m), cfg.scale),
      hdec2(cfg.m, 4 * cfg.m, 3, 1),
      hdec3(cfg.m, 2 * cfg.n, 3, 1),
      context(cfg.n, 2 * cfg.n, 5, 1, true),
      ep1(4 * cfg.n, 2 * cfg.n, 1, 1),
      ep2(2 * cfg.n, 2 * cfg.n, 1, 1),
      ep3(2 * cfg.n, 2 * cfg.n, 1, 1),
      dec1(cfg.n, cfg.n),
      dec2(ResamplerKind::Rbnu, cfg.n, cfg.heads_for(cfg.n), cfg.scale),
      dec3(cfg.n, cfg.n),
      dec4(cfg.n, 12, 3, 1) {
    cfg.validate();
    const std::size_t prior_size = static_cast<std::size_t>(cfg.m) * kPriorMixtures;
    prior.channels = cfg.m;
    prior.logits.assign(prior_size, T(0));
    prior.loc.assign(prior_size, T(0));
    prior.log_scale.assign(prior_size, T(0));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t count = 0;
    const_cast<Model*>(this)->visit(
        [&](const std::string&, const std::vector<int>&, const std::vector<T>& v) { count += v.size(); });
    return count;
}

namespace {

/// Uniform in [-a, a] from the 53 high bits of a 64-bit draw, rounded to float.
double draw_uniform(std::mt19937_64& rng, double a) {
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
    return static_cast<double>(static_cast<float>((2.0 * u - 1.0) * a));
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_attention_map(const std::string& name) {
    for (const char* m : {".wq", ".wk", ".wv", ".wo"})
        if (ends_with(name, m)) return true;
    return false;
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg) {
    ModelParams model(cfg);
    std::mt19937_64 rng(cfg.seed);
    model.visit([&](const std::string& name, const std::vector<int>& shape, std::vector<double>& v) {
        if (ends_with(name, ".weight")) {
            const int taps_per_channel = name.rfind("context.", 0) == 0 ? 12 : shape[2] * shape[3];
            const double fan_in = static_cast<double>(shape[1]) * taps_per_channel;
            const double a = std::sqrt(6.0 / fan_in);
            for (auto& w : v) w = draw_uniform(rng, a);
        } else if (ends_with(name, ".beta")) {
            std::fill(v.begin(), v.end(), 1.0);
        } else if (ends_with(name, ".gamma")) {
            const int c = shape[0];
            std::fill(v.begin(), v.end(), 0.0);
            for (int i = 0; i < c; ++i) v[static_cast<std::size_t>(i) * c + i] = static_cast<double>(1e-3f);
        } else if (is_attention_map(name)) {
            const int c = shape[0];
            for (auto& w : v) w = draw_uniform(rng, 0.01);
            for (int i = 0; i < c; ++i) {
                double& d = v[static_cast<std::size_t>(i) * c + i];
                d = static_cast<double>(static_cast<float>(d + 1.0));
            }
        } else if (name == "prior.loc") {
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % kPriorMixtures) - 1.0;
        } else {
            std::fill(v.begin(), v.end(), 0.0);  // biases, mixture logits and log-scales
        }
    });
    // A positive sigma bias keeps freshly initialized scales away from the clamp.
    for (int c = cfg.n; c < 2 * cfg.n; ++c) model.ep3.bias[c] = 1.0;
    return model;
}

Model<float> to_float(const ModelParams& params) {
    Model<float> out(params.config);
    std::vector<const std::vector<double>*> src;
    const_cast<ModelParams&>(params).visit(
        [&](const std::string&, const std::vector<int>&, const std::vector<double>& v) { src.push_back(&v); });
    std::size_t i = 0;
    out.visit([&](const std::string&, const std::vector<int>&, std::vector<float>& v) {
        const auto& s = *src[i++];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<float>(s[k]);
    });
    return out;
}

// ---- transforms ------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> leaky(Tensor<T> x) {
    return nn::relu(std::move(x), static_cast<T>(nn::kLeakySlope));
}

}  // namespace

template <typename T>
Tensor<T> analysis_transform(const Model<T>& model, const Tensor<T>& x, nn::AttentionStats* stats) {
    if (x.channels != 3) throw ContractError("forward_analysis: input must have 3 channels");
    if (x.height <= 0 || x.width <= 0 || x.height % 64 != 0 || x.width % 64 != 0)
        throw ContractError("forward_analysis: input " + std::to_string(x.width) + "x" + std::to_string(x.height) +
                            " is not a multiple of 64");
    Tensor<T> f = nn::rbnd(x, model.enc1);
    f = nn::rbnd(f, model.enc2);
    f = nn::global_attention(f, model.enc3, stats);
    return nn::rbnd(f, model.enc4);
}

template <typename T>
Tensor<T> hyper_analysis(const Model<T>& model, const Tensor<T>& y, nn::AttentionStats* stats) {
    Tensor<T> f = leaky(nn::conv2d(y, model.henc1));
    f = leaky(nn::global_attention(f, model.henc2, stats));
    return nn::conv2d(f, model.henc3);
}

template <typename T>
Latents<T> forward_analysis(const Model<T>& model, const Tensor<T>& x, nn::AttentionStats* stats) {
    Latents<T> out;
    out.y = analysis_transform(model, x, stats);
    out.z = hyper_analysis(model, out.y, stats);
    return out;
}

template <typename T>
Tensor<T> hyper_synthesis(const Model<T>& model, const Tensor<T>& z_hat, nn::AttentionStats* stats) {
    if (z_hat.channels != model.config.m) throw ContractError("hyper_synthesis: channel mismatch");
    Tensor<T> f = leaky(nn::global_attention(z_hat, model.hdec1, stats));
    f = leaky(nn::depth_to_space(nn::conv2d(f, model.hdec2)));
    return nn::conv2d(f, model.hdec3);
}

template <typename T>
Tensor<T> forward_synthesis(const Model<T>& model, const Tensor<T>& y_hat, nn::AttentionStats* stats) {
    if (y_hat.channels != model.config.n) throw ContractError("forward_synthesis: channel mismatch");
    Tensor<T> f = nn::rbnu(y_hat, model.dec1);
    f = nn::global_attention(f, model.dec2, stats);
    f = nn::rbnu(f, model.dec3);
    return nn::depth_to_space(nn::conv2d(f, model.dec4));
}

// ---- entropy parameters ----------------------------------------------------

namespace {

/// out = leaky?(W in + b) for a 1x1 convolution applied to one position.
template <typename T>
void pointwise(const nn::Conv2d<T>& layer, const std::vector<T>& in, std::vector<T>& out, bool activate) {
    out.resize(layer.out);
    for (int o = 0; o < layer.out; ++o) {
        const T* w = layer.weight.data() + static_cast<std::size_t>(o) * layer.in;
        T s = layer.bias[o];
        for (int i = 0; i < layer.in; ++i) s += w[i] * in[i];
        if (activate && s < T(0)) s *= static_cast<T>(nn::kLeakySlope);
        out[o] = s;
    }
}

}  // namespace

template <typename T>
void entropy_parameters_at(const Model<T>& model, const Tensor<T>& hyper, const Tensor<T>& y_hat, int row, int col,
                           T* mu, T* sigma) {
    const int N = model.config.n;
    const nn::Conv2d<T>& ctx = model.context;
    const int k = ctx.kernel, pad = ctx.padding();
    std::vector<T> feat(4 * static_cast<std::size_t>(N)), h1, h2, out;
    for (int c = 0; c < 2 * N; ++c) feat[c] = hyper.at(c, row, col);
    for (int o = 0; o < 2 * N; ++o) {
        T s = ctx.bias[o];
        for (int i = 0; i < N; ++i) {
            const T* w = ctx.weight.data() + (static_cast<std::size_t>(o) * N + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int yy = row + ky - pad;
                if (yy < 0 || yy >= y_hat.height) continue;
                for (int kx = 0; kx < k; ++kx) {
                    if (!ctx.tap_active(ky, kx)) continue;
                    const int xx = col + kx - pad;
                    if (xx < 0 || xx >= y_hat.width) continue;
                    s += w[ky * k + kx] * y_hat.at(i, yy, xx);
                }
            }
        }
        feat[2 * N + o] = s;
    }
    pointwise(model.ep1, feat, h1, true);
    pointwise(model.ep2, h1, h2, true);
    pointwise(model.ep3, h2, out, false);
    const T floor = static_cast<T>(kSigmaMin);
    for (int c = 0; c < N; ++c) {
        mu[c] = out[c];
        sigma[c] = std::max(out[N + c], floor);
    }
}

template <typename T>
GaussianParams<T> entropy_parameters(const Model<T>& model, const Tensor<T>& z_hat, const Tensor<T>& y_hat) {
    const Tensor<T> hyper = hyper_synthesis(model, z_hat);
    if (hyper.height != y_hat.height || hyper.width != y_hat.width || y_hat.channels != model.config.n)
        throw ContractError("entropy_parameters: hyper-latent and latent shapes disagree");
    const int N = model.config.n;
    GaussianParams<T> gp{Tensor<T>(N, y_hat.height, y_hat.width), Tensor<T>(N, y_hat.height, y_hat.width)};
    std::vector<T> mu(N), sigma(N);
    for (int r = 0; r < y_hat.height; ++r)
        for (int c = 0; c < y_hat.width; ++c) {
            entropy_parameters_at(model, hyper, y_hat, r, c, mu.data(), sigma.data());
            for (int ch = 0; ch < N; ++ch) {
                gp.mu.at(ch, r, c) = mu[ch];
                gp.sigma.at(ch, r, c) = sigma[ch];
            }
        }
    return gp;
}

// ---- quantization and rates ------------------------------------------------

double round_half_away(double v) {
    return v >= 0.0 ? std::floor(v + 0.5) : -std::floor(-v + 0.5);
}

template <typename T>
Tensor<T> quantize(const Tensor<T>& y, QuantizeMode mode, std::uint64_t seed, const Tensor<T>* mu_offset) {
    if (mu_offset && !mu_offset->same_shape(y)) throw ContractError("quantize: offset shape mismatch");
    Tensor<T> out = y;
    if (mode == QuantizeMode::Noise) {
        std::mt19937_64 rng(seed);
        for (auto& v : out.data) v += static_cast<T>(static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5);
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mu_offset) {
            const double mu = static_cast<double>(mu_offset->data[i]);
            out.data[i] = static_cast<T>(round_half_away(static_cast<double>(y.data[i]) - mu) + mu);
        } else {
            out.data[i] = static_cast<T>(round_half_away(static_cast<double>(y.data[i])));
        }
    }
    return out;
}

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double phi_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Mass of [v - 0.5, v + 0.5], evaluated on the lower tail for accuracy.
double gaussian_mass(double v, double mu, double sigma) {
    const double d = -std::fabs(v - mu);
    return phi_cdf((d + 0.5) / sigma) - phi_cdf((d - 0.5) / sigma);
}

}  // namespace

double gaussian_bits(double v, double mu, double sigma) {
    return -std::log2(std::max(gaussian_mass(v, mu, sigma), kProbabilityFloor));
}

void gaussian_bits_gradient(double v, double mu, double sigma, double& d_v, double& d_sigma) {
    const double p = gaussian_mass(v, mu, sigma);
    if (p <= kProbabilityFloor) {
        d_v = d_sigma = 0.0;
        return;
    }
    const double u = (v + 0.5 - mu) / sigma, l = (v - 0.5 - mu) / sigma;
    const double dp_dv = (phi_pdf(u) - phi_pdf(l)) / sigma;
    const double dp_ds = (-u * phi_pdf(u) + l * phi_pdf(l)) / sigma;
    const double scale = -1.0 / (p * std::numbers::ln2);
    d_v = scale * dp_dv;
    d_sigma = scale * dp_ds;
}

template <typename T>
double rate_estimate(const Tensor<T>& y_hat, const GaussianParams<T>& gp) {
    if (!y_hat.same_shape(gp.mu) || !y_hat.same_shape(gp.sigma)) throw ContractError("rate_estimate: shape mismatch");
    double bits = 0.0;
    for (std::size_t i = 0; i < y_hat.size(); ++i)
        bits += gaussian_bits(static_cast<double>(y_hat.data[i]), static_cast<double>(gp.mu.data[i]),
                              static_cast<double>(gp.sigma.data[i]));
    return bits;
}

template <typename T>
double factorized_cdf(const FactorizedPrior<T>& prior, int channel, double v) {
    const std::size_t base = static_cast<std::size_t>(channel) * kPriorMixtures;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < kPriorMixtures; ++k) max_logit = std::max(max_logit, static_cast<double>(prior.logits[base + k]));
    double weights[kPriorMixtures], total = 0.0;
    for (int k = 0; k < kPriorMixtures; ++k) {
        weights[k] = detmath::exp(static_cast<double>(prior.logits[base + k]) - max_logit);
        total += weights[k];
    }
    double cdf = 0.0;
    for (int k = 0; k < kPriorMixtures; ++k) {
        const double scale = detmath::exp(static_cast<double>(prior.log_scale[base + k]));
        cdf += weights[k] / total * detmath::sigmoid((v - static_cast<double>(prior.loc[base + k])) / scale);
    }
    return cdf;
}

template <typename T>
double factorized_bits(const FactorizedPrior<T>& prior, int channel, double v) {
    const double p = factorized_cdf(prior, channel, v + 0.5) - factorized_cdf(prior, channel, v - 0.5);
    return -std::log2(std::max(p, kProbabilityFloor));
}

template <typename T>
double rate_estimate_factorized(const Tensor<T>& z_hat, const FactorizedPrior<T>& prior) {
    if (z_hat.channels != prior.channels) throw ContractError("rate_estimate_factorized: channel mismatch");
    double bits = 0.0;
    for (int c = 0; c < z_hat.channels; ++c) {
        const T* src = z_hat.channel(c);
        for (std::size_t p = 0; p < z_hat.plane(); ++p) bits += factorized_bits(prior, c, static_cast<double>(src[p]));
    }
    return bits;
}

template <typename T>
double rd_loss(const Tensor<T>& x, const Tensor<T>& x_hat, double rate_y_bits, double rate_z_bits, double lambda,
               double pixel_count) {
    if (!x.same_shape(x_hat)) throw ContractError("rd_loss: shape mismatch");
    if (!(pixel_count > 0.0)) throw ContractError("rd_loss: pixel count must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x.data[i]) - static_cast<double>(x_hat.data[i]);
        se += d * d;
    }
    const double mse = x.size() ? se / static_cast<double>(x.size()) : 0.0;
    return (rate_y_bits + rate_z_bits) / pixel_count + lambda * 255.0 * 255.0 * mse;
}

#define PLENOPRESS_INSTANTIATE(T)                                                                                   \
    template struct Model<T>;                                                                                       \
    template Latents<T> forward_analysis(const Model<T>&, const Tensor<T>&, nn::AttentionStats*);                   \
    template Tensor<T> analysis_transform(const Model<T>&, const Tensor<T>&, nn::AttentionStats*);                  \
    template Tensor<T> hyper_analysis(const Model<T>&, const Tensor<T>&, nn::AttentionStats*);                      \
    template Tensor<T> hyper_synthesis(const Model<T>&, const Tensor<T>&, nn::AttentionStats*);                     \
    template Tensor<T> forward_synthesis(const Model<T>&, const Tensor<T>&, nn::AttentionStats*);                   \
    template void entropy_parameters_at(const Model<T>&, const Tensor<T>&, const Tensor<T>&, int, int, T*, T*);     \
    template GaussianParams<T> entropy_parameters(const Model<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> quantize(const Tensor<T>&, QuantizeMode, std::uint64_t, const Tensor<T>*);                   \
    template double rate_estimate(const Tensor<T>&, const GaussianParams<T>&);                                      \
    template double factorized_cdf(const FactorizedPrior<T>&, int, double);                                         \
    template double factorized_bits(const FactorizedPrior<T>&, int, double);                                        \
    template double rate_estimate_factorized(const Tensor<T>&, const FactorizedPrior<T>&);                          \
    template double rd_loss(const Tensor<T>&, const Tensor<T>&, double, double, double, double);

PLENOPRESS_INSTANTIATE(float)
PLENOPRESS_INSTANTIATE(double)

}  // namespace plenopress
