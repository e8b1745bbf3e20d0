#pragma once

#include <cstdint>
#include <string>

#include "plenopress/layers.hpp"

namespace plenopress {

/// Gdn / Igdn: one normalization layer. GlobalAttention: the two-stage
/// attention module around a plain resampler. RdToy: stride-2 conv -> GDN ->
/// additive noise -> Gaussian rate -> conv + depth-to-space -> rate-distortion loss.
enum class GradTarget { Gdn, Igdn, GlobalAttention, RdToy };

struct GradCheckOptions {
    int probes = 200;
    std::uint64_t seed = 1;
    double step = 1e-5;
    int channels = 4;
    int heads = 1;
    nn::ResamplerKind resampler = nn::ResamplerKind::Conv;
    nn::AttentionScale scale = nn::AttentionScale::PerHead;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    int probes = 0;
    std::string worst;  // "<block>[index]" of the worst probe
};

/// Compares reverse-mode gradients of a seeded random linear functional of
/// the output against central finite differences, in double precision, at
/// randomly chosen input and parameter coordinates. Relative error is
/// |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).
GradCheckResult grad_check(GradTarget target, const GradCheckOptions& options = {});

GradTarget parse_grad_target(const std::string& name);
std::string to_string(GradTarget target);

}  // namespace plenopress
