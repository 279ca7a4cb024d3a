#include "grawa/local_opt.hpp"

#include "grawa/errors.hpp"

#include <cmath>

namespace grawa {

namespace {
constexpr double kAscendFloor = 1e-12;
}

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "inverse_t"; }

LrSchedule lr_schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "inverse_t") return LrSchedule::inverse_t;
    throw ConfigError("lr_schedule: unknown schedule '" + s + "'");
}

void LocalOptConfig::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta: must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum: must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay: must be >= 0");
    if (!(sam_rho >= 0.0)) throw ConfigError("sam_rho: must be >= 0");
    if (lr_schedule == LrSchedule::inverse_t) {
        if (!(lr_c > 0.0)) throw ConfigError("lr_c: must be > 0");
        if (!(lr_offset >= 0.0)) throw ConfigError("lr_offset: must be >= 0");
    }
}

double LocalOptConfig::rate(long t) const {
    if (lr_schedule == LrSchedule::constant) return eta;
    return lr_c / (static_cast<double>(t) + lr_offset);
}

OptBuffers OptBuffers::for_params(const LayerStack& params) {
    return OptBuffers{LayerStack::zeros(params.signature()), 0};
}

LayeredParams sgd_step(const LayeredParams& params, const LayeredGradient& grad, OptBuffers& buffers,
                       const LocalOptConfig& config, long t) {
    require_same_signature(params, grad, "sgd_step");
    if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient");

    LayerStack direction = grad;
    if (config.weight_decay > 0.0) direction.axpy(config.weight_decay, params);
    if (config.momentum > 0.0) {
        if (buffers.momentum.layer_count() == 0) buffers = OptBuffers::for_params(params);
        require_same_signature(params, buffers.momentum, "sgd_step buffers");
        buffers.momentum.scale(config.momentum);
        buffers.momentum.axpy(1.0, direction);
        if (config.nesterov) {
            direction.axpy(config.momentum, buffers.momentum);
        } else {
            direction = buffers.momentum;
        }
    }
    ++buffers.step;

    LayeredParams out = params;
    out.axpy(-config.rate(t), direction);
    return out;
}

SamGradient sam_gradient(const Objective& objective, const LayeredParams& params, const Batch& batch, double rho,
                         Rng* noise) {
    SamGradient out;
    out.loss = objective.eval(params, batch);
    out.gradient = objective.grad(params, batch, noise);
    out.raw_grad_norm = out.gradient.norm();
    if (rho == 0.0) return out;
    if (out.raw_grad_norm < kAscendFloor) {
        out.ascend_skipped = true;
        return out;
    }
    LayeredParams adversarial = params;
    adversarial.axpy(rho / out.raw_grad_norm, out.gradient);
    out.gradient = objective.grad(adversarial, batch, noise);
    return out;
}

SamStepResult sam_step(const Objective& objective, const LayeredParams& params, const Batch& batch,
                       OptBuffers& buffers, const LocalOptConfig& config, long t, Rng* noise) {
    if (!(config.sam_rho >= 0.0)) throw ConfigError("sam_rho: must be >= 0");
    SamGradient descend = sam_gradient(objective, params, batch, config.sam_rho, noise);
    LayeredParams next = sgd_step(params, descend.gradient, buffers, config, t);
    return SamStepResult{std::move(next), std::move(descend)};
}

LayeredParams proximity_step(const LayeredParams& params, const LayeredParams& center, double mu, double tau) {
    if (!(tau > 0.0)) throw ConfigError("tau: must be > 0");
    const double strength = mu / tau;
    if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("mu: mu / tau must lie in [0, 1]");
    require_same_signature(params, center, "proximity_step");
    if (strength == 0.0) return params;
    return LayeredParams(lerp(params, center, strength));
}

}  // namespace grawa
