#include "plenopress/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "plenopress/codec_model.hpp"
#include "plenopress/error.hpp"

namespace plenopress {

namespace {

using Tensord = Tensor<double>;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1p-53;
}

void fill(std::vector<double>& v, std::mt19937_64& rng, double lo, double hi) {
    for (auto& x : v) x = uniform(rng, lo, hi);
}

Tensord random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo, double hi) {
    Tensord t(c, h, w);
    fill(t.data, rng, lo, hi);
    return t;
}

double dot(const Tensord& a, const Tensord& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

/// A differentiable scalar problem over named coordinate blocks.
struct Problem {
    std::vector<std::pair<std::string, std::vector<double>*>> blocks;
    std::function<double()> loss;
    /// Gradients in block order.
    std::function<std::vector<std::vector<double>>()> gradient;
};

template <typename L>
void register_params(Problem& p, L& layer, const std::string& prefix) {
    layer.visit(prefix, [&](const std::string& name, const std::vector<int>&, std::vector<double>& v) {
        p.blocks.emplace_back(name, &v);
    });
}

template <typename L>
void collect_grads(std::vector<std::vector<double>>& out, L& grad) {
    grad.visit("", [&](const std::string&, const std::vector<int>&, std::vector<double>& v) { out.push_back(v); });
}

GradCheckResult run(Problem& p, const GradCheckOptions& opt) {
    const auto analytic = p.gradient();
    if (analytic.size() != p.blocks.size()) throw ContractError("grad_check: gradient block count mismatch");
    std::size_t total = 0;
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        if (analytic[b].size() != p.blocks[b].second->size()) throw ContractError("grad_check: gradient shape mismatch");
        for (double g : analytic[b])
            if (!std::isfinite(g)) throw ContractError("grad_check: non-finite gradient in " + p.blocks[b].first);
        total += analytic[b].size();
    }
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    GradCheckResult result;
    for (int probe = 0; probe < opt.probes; ++probe) {
        std::size_t flat = rng() % total, b = 0;
        while (flat >= p.blocks[b].second->size()) flat -= p.blocks[b++].second->size();
        double& coord = (*p.blocks[b].second)[flat];
        const double saved = coord;
        coord = saved + opt.step;
        const double up = p.loss();
        coord = saved - opt.step;
        const double down = p.loss();
        coord = saved;
        const double fd = (up - down) / (2.0 * opt.step);
        const double ga = analytic[b][flat];
        if (!std::isfinite(fd)) throw ContractError("grad_check: non-finite finite difference");
        const double rel = std::fabs(ga - fd) / std::max({std::fabs(ga), std::fabs(fd), 1e-8});
        if (rel >= result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst = p.blocks[b].first + "[" + std::to_string(flat) + "]";
        }
        ++result.probes;
    }
    return result;
}

GradCheckResult check_gdn(bool inverse, const GradCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    const int C = opt.channels;
    nn::Gdn<double> layer(C, inverse);
    fill(layer.beta, rng, 0.5, 1.5);
    fill(layer.gamma, rng, 0.0, 0.2);
    Tensord x = random_tensor(C, 4, 4, rng, -2.0, 2.0);
    const Tensord weights = random_tensor(C, 4, 4, rng, -1.0, 1.0);

    Problem p;
    p.blocks.emplace_back("x", &x.data);
    register_params(p, layer, "gdn");
    p.loss = [&] { return dot(weights, nn::gdn(x, layer)); };
    p.gradient = [&] {
        auto grad = nn::zeros_like(layer);
        std::vector<std::vector<double>> out{nn::gdn_backward(x, layer, weights, grad).data};
        collect_grads(out, grad);
        return out;
    };
    return run(p, opt);
}

GradCheckResult check_attention(const GradCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    const int C = opt.channels;
    nn::GlobalAttention<double> ga(opt.resampler, C, opt.heads, opt.scale);
    ga.visit("", [&](const std::string& name, const std::vector<int>& shape, std::vector<double>& v) {
        if (name.ends_with(".beta")) fill(v, rng, 0.5, 1.5);
        else if (name.ends_with(".gamma")) fill(v, rng, 0.0, 0.1);
        else if (shape.size() == 2) {  // attention maps: identity plus noise
            fill(v, rng, -0.3, 0.3);
            for (int i = 0; i < C; ++i) v[static_cast<std::size_t>(i) * C + i] += 1.0;
        } else if (shape.size() == 4) fill(v, rng, -0.4, 0.4);
        else fill(v, rng, -0.1, 0.1);
    });
    // 64 key positions: 8x8 down to 4x4, or 4x4 up to 8x8.
    const int side = nn::Resampler<double>(opt.resampler, 1).upsamples() ? 4 : 8;
    Tensord f = random_tensor(C, side, side, rng, -1.0, 1.0);
    const Tensord probe_out = nn::global_attention(f, ga);
    const Tensord weights = random_tensor(probe_out.channels, probe_out.height, probe_out.width, rng, -1.0, 1.0);

    Problem p;
    p.blocks.emplace_back("f", &f.data);
    register_params(p, ga, "attention");
    p.loss = [&] { return dot(weights, nn::global_attention(f, ga)); };
    p.gradient = [&] {
        auto grad = nn::zeros_like(ga);
        std::vector<std::vector<double>> out{nn::global_attention_backward(f, ga, weights, grad).data};
        collect_grads(out, grad);
        return out;
    };
    return run(p, opt);
}

GradCheckResult check_rd_toy(const GradCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    const int C = opt.channels, side = 8;
    const double lambda = 0.01, pixels = side * side;
    nn::Conv2d<double> enc(3, C, 3, 2), dec(C, 12, 3, 1);
    nn::Gdn<double> norm(C, false);
    fill(enc.weight, rng, -0.5, 0.5);
    fill(enc.bias, rng, -0.1, 0.1);
    fill(dec.weight, rng, -0.3, 0.3);
    fill(dec.bias, rng, -0.1, 0.1);
    fill(norm.beta, rng, 0.5, 1.5);
    fill(norm.gamma, rng, 0.0, 0.2);
    std::vector<double> sigma(C);
    fill(sigma, rng, 0.5, 2.0);
    Tensord x = random_tensor(3, side, side, rng, 0.0, 1.0);
    const Tensord noise = random_tensor(C, side / 2, side / 2, rng, -0.5, 0.5);

    struct Trace {
        Tensord h, y, y_tilde, x_hat;
        double rate = 0.0;
    };
    auto forward = [&] {
        Trace t;
        t.h = nn::conv2d(x, enc);
        t.y = nn::gdn(t.h, norm);
        t.y_tilde = t.y;
        for (std::size_t i = 0; i < t.y.size(); ++i) t.y_tilde.data[i] += noise.data[i];
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < t.y.plane(); ++i) t.rate += gaussian_bits(t.y_tilde.channel(c)[i], 0.0, sigma[c]);
        t.x_hat = nn::depth_to_space(nn::conv2d(t.y_tilde, dec));
        return t;
    };

    Problem p;
    p.blocks.emplace_back("x", &x.data);
    register_params(p, enc, "enc");
    register_params(p, norm, "gdn");
    p.blocks.emplace_back("sigma", &sigma);
    register_params(p, dec, "dec");
    p.loss = [&] {
        const Trace t = forward();
        return rd_loss(x, t.x_hat, t.rate, 0.0, lambda, pixels);
    };
    p.gradient = [&] {
        const Trace t = forward();
        const double d_scale = lambda * 255.0 * 255.0 * 2.0 / static_cast<double>(x.size());
        Tensord g_xhat(3, side, side), g_x(3, side, side);
        for (std::size_t i = 0; i < x.size(); ++i) {
            g_xhat.data[i] = d_scale * (t.x_hat.data[i] - x.data[i]);
            g_x.data[i] = -g_xhat.data[i];
        }
        auto g_dec = nn::zeros_like(dec);
        Tensord g_y = nn::conv2d_backward(t.y_tilde, dec, nn::depth_to_space_backward(g_xhat), g_dec);
        std::vector<double> g_sigma(C, 0.0);
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < t.y.plane(); ++i) {
                double dv = 0.0, ds = 0.0;
                gaussian_bits_gradient(t.y_tilde.channel(c)[i], 0.0, sigma[c], dv, ds);
                g_y.channel(c)[i] += dv / pixels;
                g_sigma[c] += ds / pixels;
            }
        auto g_norm = nn::zeros_like(norm);
        auto g_enc = nn::zeros_like(enc);
        const Tensord g_h = nn::gdn_backward(t.h, norm, g_y, g_norm);
        const Tensord g_in = nn::conv2d_backward(x, enc, g_h, g_enc);
        for (std::size_t i = 0; i < x.size(); ++i) g_x.data[i] += g_in.data[i];
        std::vector<std::vector<double>> out{g_x.data};
        collect_grads(out, g_enc);
        collect_grads(out, g_norm);
        out.push_back(g_sigma);
        collect_grads(out, g_dec);
        return out;
    };
    return run(p, opt);
}

}  // namespace

GradCheckResult grad_check(GradTarget target, const GradCheckOptions& options) {
    if (options.probes <= 0) throw ContractError("grad_check: probe count must be positive");
    if (options.channels > 8) throw ContractError("grad_check: toy shapes need at most 8 channels");
    switch (target) {
        case GradTarget::Gdn: return check_gdn(false, options);
        case GradTarget::Igdn: return check_gdn(true, options);
        case GradTarget::GlobalAttention: return check_attention(options);
        case GradTarget::RdToy: return check_rd_toy(options);
    }
    return {};
}

GradTarget parse_grad_target(const std::string& name) {
    if (name == "gdn") return GradTarget::Gdn;
    if (name == "igdn") return GradTarget::Igdn;
    if (name == "attention") return GradTarget::GlobalAttention;
    if (name == "rd") return GradTarget::RdToy;
    throw UsageError("unknown gradient target '" + name + "' (expected gdn, igdn, attention or rd)");
}

std::string to_string(GradTarget target) {
    switch (target) {
        case GradTarget::Gdn: return "gdn";
        case GradTarget::Igdn: return "igdn";
        case GradTarget::GlobalAttention: return "attention";
        case GradTarget::RdToy: return "rd";
    }
    return "?";
}

}  // namespace plenopress
