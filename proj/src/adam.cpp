#include <cmath>

#include "casii/error.hpp"
#include "casii/train.hpp"

namespace casii::train {

AdamState AdamState::like(const model::CasiiParams& params) {
    AdamState s;
    s.first_moment = model::Gradients::zeros(params.dim(), params.latent(), params.tau());
    s.second_moment = model::Gradients::zeros(params.dim(), params.latent(), params.tau());
    return s;
}

void adam_step(model::CasiiParams& params, const model::Gradients& grads, AdamState& state,
               const AdamSettings& settings) {
    ++state.step;
    const double t = double(state.step);
    const double correction1 = 1.0 - std::pow(settings.beta1, t);
    const double correction2 = 1.0 - std::pow(settings.beta2, t);

    auto p_blocks = params.blocks();
    const auto g_blocks = grads.blocks();
    auto m_blocks = state.first_moment.blocks();
    auto v_blocks = state.second_moment.blocks();

    for (std::size_t b = 0; b < model::kBlockCount; ++b) {
        auto p = p_blocks[b].values;
        const auto g = g_blocks[b].values;
        auto m = m_blocks[b].values;
        auto v = v_blocks[b].values;
        require(p.size() == g.size() && p.size() == m.size(), "gradient shape differs from parameter shape");
        const double decay = p_blocks[b].is_weight ? settings.learning_rate * settings.weight_decay : 0.0;

        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= decay * p[i];
            m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g[i];
            v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= settings.learning_rate * m_hat / (std::sqrt(v_hat) + settings.epsilon);
        }
    }
    if (auto bad = model::first_non_finite_block(params); !bad.empty()) {
        fail(Errc::numerical, "optimizer step produced a non-finite value in " + std::string(bad));
    }
}

}  // namespace casii::train
