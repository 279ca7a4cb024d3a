#pragma once

#include "grawa/layered.hpp"
#include "grawa/objective.hpp"

#include <string>

namespace grawa {

enum class LrSchedule { constant, inverse_t };

std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& s);

struct LocalOptConfig {
    double eta = 0.01;
    double momentum = 0.0;
    bool nesterov = false;
    double weight_decay = 0.0;
    // SAM neighbourhood radius; 0 disables the ascend step.
    double sam_rho = 0.0;
    LrSchedule lr_schedule = LrSchedule::constant;
    // inverse_t: effective rate = lr_c / (t + lr_offset)
    double lr_c = 1.0;
    double lr_offset = 0.0;

    void validate() const;
    double rate(long t) const;

    friend bool operator==(const LocalOptConfig&, const LocalOptConfig&) = default;
};

struct OptBuffers {
    LayerStack momentum;
    long step = 0;

    static OptBuffers for_params(const LayerStack& params);
};

// One SGD step at local iteration t (1-based). Momentum follows the
// heavy-ball recursion buf <- momentum * buf + g, optionally Nesterov.
// Weight decay is coupled (added to the gradient).
LayeredParams sgd_step(const LayeredParams& params, const LayeredGradient& grad, OptBuffers& buffers,
                       const LocalOptConfig& config, long t);

struct SamGradient {
    LayeredGradient gradient;
    // Loss and gradient at the un-perturbed point.
    double loss = 0.0;
    double raw_grad_norm = 0.0;
    bool ascend_skipped = false;
};

// Gradient at x + rho * g / |g| on the same batch. With rho = 0 this is the
// plain batch gradient, computed once.
SamGradient sam_gradient(const Objective& objective, const LayeredParams& params, const Batch& batch,
                         double rho, Rng* noise = nullptr);

struct SamStepResult {
    LayeredParams params;
    SamGradient descend;
};

SamStepResult sam_step(const Objective& objective, const LayeredParams& params, const Batch& batch,
                       OptBuffers& buffers, const LocalOptConfig& config, long t, Rng* noise = nullptr);

// x <- (1 - mu / tau) x + (mu / tau) center
LayeredParams proximity_step(const LayeredParams& params, const LayeredParams& center, double mu, double tau);

}  // namespace grawa
