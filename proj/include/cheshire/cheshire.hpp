#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <optional>

#include "cheshire/control.hpp"
#include "cheshire/simulate.hpp"

namespace cheshire {

// Online sampler for the optimal incentivized-action process. The control
// intensity u*(t) = [base_u(t) - K(t) (lambda(t) - mu0)]_+ splits into the
// deterministic base plus one decaying component -K(t) A e_u kappa(t - s) per
// past event (organic and incentivized alike). Each component evolves
// autonomously, so when a new event only adds a component, the previously
// sampled candidate arrival stays valid and the new component's first arrival
// is folded in by minimum. After one of our own actions fires, the pending
// sample was consumed and the whole superposition is redrawn.
//
// The summed excitation W(t) = sum_j A e_{u_j} kappa(t - s_j) is maintained
// incrementally (one global decay per event, one sparse column add per event)
// instead of re-walking the component list, which would cost O(events) per
// evaluation. Components whose intensity envelope has decayed below 1e-12 of
// the current total bound are dropped, with their exact current contribution
// subtracted from W, so W always equals the sum over retained components.
class CheshireControl final : public ControlProcess {
public:
    explicit CheshireControl(const FeedbackPolicy& policy)
        : policy_(&policy), model_(&policy.model()) {}

    void reset(double t0, double tf, Rng& rng) override {
        const double slack = 1e-9 * (1.0 + std::abs(policy_->tf()));
        if (t0 < policy_->t0() - slack || tf > policy_->tf() + slack)
            throw ConfigError("simulation window is not covered by the policy horizon");
        tf_ = tf;
        components_.clear();
        excitation_ = VectorXd::Zero(model_->n());
        as_of_ = t0;
        record_ = ClampRecord{};
        pending_ = sample_aggregate(t0, rng);
    }

    std::optional<Arrival> next_action() const override { return pending_; }

    void on_event(int user, double time, bool own_action, Rng& rng) override {
        advance(time);
        components_.push_back(Component{time, user});
        model_->add_column_to(user, excitation_);
        record_.observe(policy_->control_from_excitation(time, excitation_));
        if (own_action) {
            pending_ = sample_aggregate(time, rng);
        } else {
            auto candidate = sample_component(user, time, rng);
            if (candidate && (!pending_ || candidate->time < pending_->time))
                pending_ = candidate;
        }
    }

    ClampRecord record() const override { return record_; }

    std::size_t component_count() const { return components_.size(); }
    double excitation_as_of() const { return as_of_; }

    // Excitation advanced to t (t >= the last event time) without mutating state.
    VectorXd excitation_at(double t) const {
        return excitation_ * std::exp(-model_->omega() * (t - as_of_));
    }

    // Pre-clamp control intensity re-derived from the retained component list
    // with fresh decay factors; the verification route against the
    // closed-form law on the simulator's lambda.
    VectorXd superposed_control_raw(double t) const {
        VectorXd fresh = VectorXd::Zero(model_->n());
        for (const Component& c : components_)
            model_->add_column_to(c.user, fresh, std::exp(-model_->omega() * (t - c.birth)));
        return policy_->control_from_excitation(t, fresh);
    }

    // The route the sampler itself uses at proposal times.
    VectorXd incremental_control_raw(double t) const {
        return policy_->control_from_excitation(t, excitation_at(t));
    }

private:
    struct Component {
        double birth;
        int user;
    };

    void advance(double t) {
        excitation_ *= std::exp(-model_->omega() * (t - as_of_));
        as_of_ = t;
        double total_bound = policy_->total_intensity_bound(t, excitation_);
        double threshold = 1e-12 * total_bound + 1e-300;
        while (!components_.empty()) {
            const Component& oldest = components_.front();
            if (policy_->component_intensity_bound(t, oldest.user, oldest.birth) >= threshold)
                break;
            model_->add_column_to(oldest.user, excitation_,
                                  -std::exp(-model_->omega() * (t - oldest.birth)));
            components_.pop_front();
        }
        // subtraction can leave -1e-17 dust in entries that decayed to zero
        excitation_ = excitation_.cwiseMax(0.0);
    }

    std::optional<Arrival> sample_aggregate(double from, Rng& rng) {
        double t = from;
        while (true) {
            VectorXd exc = excitation_at(t);
            double cap = policy_->total_intensity_bound(t, exc);
            if (!(cap > 0.0)) return std::nullopt;
            t += rng.exponential(cap);
            if (t >= tf_) return std::nullopt;
            exc = excitation_at(t);
            VectorXd raw = policy_->control_from_excitation(t, exc);
            record_.observe(raw);
            VectorXd pos = raw.cwiseMax(0.0);
            double total = pos.sum();
            if (total > cap * (1.0 + 1e-9) + 1e-300)
                throw SolverError("control thinning bound violated at t=" + std::to_string(t));
            if (rng.uniform() * cap < total) {
                int user = rng.categorical(
                    std::span<const double>(pos.data(), static_cast<std::size_t>(pos.size())),
                    total);
                return Arrival{t, user};
            }
        }
    }

    std::optional<Arrival> sample_component(int source, double birth, Rng& rng) {
        double t = birth;
        while (true) {
            double cap = policy_->component_intensity_bound(t, source, birth);
            if (!(cap > 0.0)) return std::nullopt;
            t += rng.exponential(cap);
            if (t >= tf_) return std::nullopt;
            double decay = std::exp(-model_->omega() * (t - birth));
            VectorXd raw = (-decay) * policy_->gain_times_column(t, source);
            VectorXd pos = raw.cwiseMax(0.0);
            double total = pos.sum();
            if (total > cap * (1.0 + 1e-9) + 1e-300)
                throw SolverError("component thinning bound violated at t=" + std::to_string(t));
            if (rng.uniform() * cap < total) {
                int user = rng.categorical(
                    std::span<const double>(pos.data(), static_cast<std::size_t>(pos.size())),
                    total);
                return Arrival{t, user};
            }
        }
    }

    const FeedbackPolicy* policy_;
    const NetworkModel* model_;
    double tf_ = 0.0;
    std::deque<Component> components_;
    VectorXd excitation_;
    double as_of_ = 0.0;
    std::optional<Arrival> pending_;
    ClampRecord record_;
};

inline SimulationResult simulate_controlled(const NetworkModel& model,
                                            const FeedbackPolicy& policy, double t0, double tf,
                                            std::uint64_t seed, std::size_t event_cap = 1000000,
                                            const VectorXd* lambda0 = nullptr) {
    if (policy.model().n() != model.n())
        throw ConfigError("policy was solved for a different network size");
    auto start = std::chrono::steady_clock::now();
    CheshireControl control(policy);
    HawkesSimulator sim(model, t0, tf, Rng(derive_seed(seed, 0)), Rng(derive_seed(seed, 1)),
                        control, event_cap, lambda0);
    bool completed = sim.run();
    return detail::finish(sim, completed, start, control.record());
}

} // namespace cheshire
