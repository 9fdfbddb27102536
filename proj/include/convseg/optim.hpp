#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "convseg/errors.hpp"
#include "convseg/tensor.hpp"

namespace convseg {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<std::vector<double>> m;  // first moments, one per param tensor
    std::vector<std::vector<double>> v;  // second moments
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline AdamState adam_init(const std::vector<Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.emplace_back(p->numel(), 0.0);
        s.v.emplace_back(p->numel(), 0.0);
    }
    return s;
}

// One bias-corrected Adam update over a parameter group. Gradients are read
// from each tensor's grad buffer.
inline void adam_step(const std::vector<Tensor*>& params, AdamState& state, double lr,
                      const std::vector<std::string>* names = nullptr) {
    if (lr < 0.0) throw ParamError("negative learning rate");
    if (params.size() != state.m.size())
        throw ShapeError("adam state has " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(params.size()) + " params");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        if (p.grad.size() != p.data.size())
            throw ShapeError("missing gradient for parameter " + std::to_string(t));
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            if (!std::isfinite(g)) {
                const std::string who = names ? (*names)[t] : std::to_string(t);
                throw DivergenceError("non-finite gradient in tensor " + who);
            }
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Learning-rate schedules

enum class ScheduleKind { kStepDecay, kSgdr };

// lr = base * factor^floor(epoch / period)
inline double step_decay_lr(std::int64_t epoch, double base_lr, double factor,
                            std::int64_t period) {
    if (epoch < 0) throw ParamError("negative epoch");
    if (factor <= 0.0 || factor > 1.0) throw ParamError("step-decay factor must be in (0,1]");
    if (period < 1) throw ParamError("step-decay period must be >= 1");
    return base_lr * std::pow(factor, static_cast<double>(epoch / period));
}

// Cosine annealing with warm restarts. One state per training session.
struct ScheduleState {
    ScheduleKind kind = ScheduleKind::kSgdr;
    double eta_max = 1e-3;
    double eta_min = 0.0;
    std::int64_t t_cur = 0;      // epoch offset within the current cycle
    std::int64_t cycle_len = 1;  // T_i, epochs per cycle
    std::int64_t t_mult = 2;     // cycle growth multiplier
    std::int64_t cycle_index = 0;
    // step-decay parameters
    double factor = 0.8;
    std::int64_t period = 25;
    std::int64_t epoch = 0;  // absolute epoch, drives step decay
};

inline ScheduleState make_sgdr(double eta_max, double eta_min, std::int64_t t0,
                               std::int64_t t_mult) {
    if (t0 < 1) throw ParamError("sgdr cycle length must be >= 1");
    if (t_mult < 1) throw ParamError("sgdr multiplier must be >= 1");
    ScheduleState s;
    s.kind = ScheduleKind::kSgdr;
    s.eta_max = eta_max;
    s.eta_min = eta_min;
    s.cycle_len = t0;
    s.t_mult = t_mult;
    return s;
}

inline ScheduleState make_step_decay(double base_lr, double factor, std::int64_t period) {
    ScheduleState s;
    s.kind = ScheduleKind::kStepDecay;
    s.eta_max = base_lr;
    s.factor = factor;
    s.period = period;
    return s;
}

// eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / T_i)) / 2
inline double sgdr_lr(const ScheduleState& s) {
    if (s.t_cur < 0 || s.t_cur > s.cycle_len)
        throw ParamError("sgdr t_cur " + std::to_string(s.t_cur) +
                         " outside cycle of length " + std::to_string(s.cycle_len));
    const double phase = static_cast<double>(s.t_cur) / static_cast<double>(s.cycle_len);
    return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(M_PI * phase));
}

inline double schedule_lr(const ScheduleState& s) {
    if (s.kind == ScheduleKind::kStepDecay)
        return step_decay_lr(s.epoch, s.eta_max, s.factor, s.period);
    return sgdr_lr(s);
}

// Advance one epoch; at the end of a cycle the lr warm-restarts to eta_max
// and the next cycle is t_mult times longer.
inline ScheduleState sgdr_advance(ScheduleState s) {
    s.epoch += 1;
    s.t_cur += 1;
    if (s.t_cur > s.cycle_len) {
        s.t_cur = 0;
        s.cycle_len *= s.t_mult;
        s.cycle_index += 1;
    }
    return s;
}

inline ScheduleState schedule_advance(ScheduleState s) {
    if (s.kind == ScheduleKind::kStepDecay) {
        s.epoch += 1;
        return s;
    }
    return sgdr_advance(s);
}

}  // namespace convseg
