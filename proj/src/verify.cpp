#include "pcm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "pcm/allocation.hpp"
#include "pcm/grpo_core.hpp"
#include "pcm/masking.hpp"
#include "pcm/signal.hpp"
#include "pcm/toyworld.hpp"

namespace pcm {

using nlohmann::json;

void VerifyOptions::validate() const {
    if (budget == 0) throw InvalidInput("verification budget must be >= 1");
}

bool VerifyReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

json VerifyReport::to_json() const {
    json j;
    j["passed"] = passed();
    j["checks"] = json::array();
    for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return j;
}

double grid_min_variance(const std::vector<double>& counts, const std::vector<double>& variances, double budget,
                         double step) {
    const auto units = static_cast<long>(std::llround(budget / step));
    std::vector<double> weight(counts.size());
    std::vector<long> held(counts.size(), 0);
    long used = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        weight[c] = counts[c] * counts[c] * variances[c];
        if (weight[c] > 0.0) {
            held[c] = 1;
            ++used;
        }
    }
    if (used > units) return std::numeric_limits<double>::infinity();

    auto gain = [&](std::size_t c) {
        const double j = static_cast<double>(held[c]);
        return weight[c] / (j * step) - weight[c] / ((j + 1.0) * step);
    };
    std::priority_queue<std::pair<double, std::size_t>> heap;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (weight[c] > 0.0) heap.emplace(gain(c), c);
    }
    // Any leftover units can sit on zero-weight phases for free.
    for (; used < units && !heap.empty(); ++used) {
        const auto c = heap.top().second;
        heap.pop();
        ++held[c];
        heap.emplace(gain(c), c);
    }

    double total = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (weight[c] > 0.0) total += weight[c] / (static_cast<double>(held[c]) * step);
    }
    return total;
}

std::vector<double> enumerate_inclusion(const std::vector<double>& weights, std::size_t m) {
    const std::size_t n = weights.size();
    m = std::min(m, n);
    std::vector<double> incl(n, 0.0);
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> chosen;

    auto recurse = [&](auto&& self, double prob, double remaining) -> void {
        if (chosen.size() == m) {
            for (auto k : chosen) incl[k] += prob;
            return;
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (taken[k]) continue;
            taken[k] = true;
            chosen.push_back(k);
            self(self, prob * weights[k] / remaining, remaining - weights[k]);
            chosen.pop_back();
            taken[k] = false;
        }
    };
    recurse(recurse, 1.0, std::accumulate(weights.begin(), weights.end(), 0.0));
    return incl;
}

namespace {

PhaseStats random_stats(Rng& rng, std::size_t k) {
    std::uniform_int_distribution<int> count(0, 20);
    std::uniform_real_distribution<double> var(0.0, 10.0);
    PhaseStats s;
    s.budget = 1.0;
    do {
        s.counts.assign(k, 0.0);
        s.variances.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            s.counts[c] = count(rng);
            s.variances[c] = var(rng);
        }
    } while (std::none_of(s.counts.begin(), s.counts.end(), [](double n) { return n > 0; }));
    return s;
}

Eigen::VectorXd estimate(std::span<const Eigen::VectorXd> samples, double n, InjectedFault fault) {
    if (fault == InjectedFault::DropRatioScale) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(samples.front().size());
        for (const auto& s : samples) sum += s;
        return sum;
    }
    return ratio_estimator(samples, n);
}

// Exhaustive grid for small K, used to cross-check the greedy minimum.
double exhaustive_grid_min(const PhaseStats& s, double step) {
    const auto units = static_cast<long>(std::llround(s.budget / step));
    std::vector<double> b(s.phases());
    double best = std::numeric_limits<double>::infinity();
    auto recurse = [&](auto&& self, std::size_t c, long left) -> void {
        if (c + 1 == s.phases()) {
            b[c] = static_cast<double>(left) * step;
            best = std::min(best, estimator_variance(s, b));
            return;
        }
        for (long j = 0; j <= left; ++j) {
            b[c] = static_cast<double>(j) * step;
            self(self, c + 1, left - j);
        }
    };
    recurse(recurse, 0, units);
    return best;
}

} // namespace

CheckResult check_neyman_optimality(std::uint64_t seed, std::size_t instances) {
    Rng rng = derive_stream(seed, 1);
    std::uniform_int_distribution<int> phases(1, 5);
    std::uniform_int_distribution<int> budget(1, 64);

    double worst_closed_form = 0.0;
    double worst_grid_gap = -std::numeric_limits<double>::infinity();
    double worst_cross = 0.0;
    std::size_t ran = 0, exhaustive = 0;
    bool ok = true;
    while (ran < instances) {
        auto s = random_stats(rng, static_cast<std::size_t>(phases(rng)));
        s.budget = budget(rng);
        double w = 0.0;
        for (std::size_t c = 0; c < s.phases(); ++c) w += s.counts[c] * std::sqrt(s.variances[c]);
        if (!(w > 0.0)) continue;
        ++ran;

        const auto alloc = neyman_allocation(s);
        const double at_opt = estimator_variance(s, alloc);
        const double closed = min_variance(s);
        const double rel = std::abs(at_opt - closed) / closed;
        worst_closed_form = std::max(worst_closed_form, rel);
        if (rel > 1e-9) ok = false;

        const double step = 1e-3 * s.budget;
        const double grid = grid_min_variance(s.counts, s.variances, s.budget, step);
        // Positive gap means some grid point beats the analytic optimum.
        const double gap = (at_opt - grid) / closed;
        worst_grid_gap = std::max(worst_grid_gap, gap);
        if (gap > 1e-12) ok = false;

        if (s.phases() <= 2 || (s.phases() == 3 && exhaustive < 10)) {
            const double full = exhaustive_grid_min(s, step);
            const double cross = std::abs(full - grid) / std::max(full, 1e-300);
            worst_cross = std::max(worst_cross, cross);
            if (cross > 1e-12) ok = false;
            ++exhaustive;
        }
    }
    return {"neyman_optimality", ok,
            {{"instances", ran},
             {"max_rel_error_vs_closed_form", worst_closed_form},
             {"max_rel_grid_improvement", worst_grid_gap},
             {"exhaustive_cross_checks", exhaustive},
             {"max_rel_greedy_vs_exhaustive", worst_cross}}};
}

CheckResult check_speedup_ratio(std::uint64_t seed, std::size_t instances) {
    Rng rng = derive_stream(seed, 2);
    std::uniform_int_distribution<int> phases(1, 5);
    double min_delta = std::numeric_limits<double>::infinity();
    bool ok = true;
    std::size_t ran = 0;
    while (ran < instances) {
        const auto s = random_stats(rng, static_cast<std::size_t>(phases(rng)));
        double w = 0.0;
        for (std::size_t c = 0; c < s.phases(); ++c) w += s.counts[c] * std::sqrt(s.variances[c]);
        if (!(w > 0.0)) continue;
        ++ran;
        const double d = speedup_ratio(s);
        min_delta = std::min(min_delta, d);
        if (d < 1.0 - 1e-12) ok = false;
    }

    // Equal N^2 V: pick N freely and set V = const / N^2.
    double worst_equal = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        PhaseStats s;
        for (std::size_t c = 0; c < k; ++c) {
            const double n = static_cast<double>(c + 2);
            s.counts.push_back(n);
            s.variances.push_back(7.0 / (n * n));
        }
        worst_equal = std::max(worst_equal, std::abs(speedup_ratio(s) - 1.0));
    }
    if (worst_equal > 1e-12) ok = false;

    double worst_concentrated = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        PhaseStats s;
        s.counts.assign(k, 4.0);
        s.variances.assign(k, 0.0);
        s.variances[k - 1] = 3.0;
        worst_concentrated =
            std::max(worst_concentrated, std::abs(speedup_ratio(s) - static_cast<double>(k)) / static_cast<double>(k));
    }
    if (worst_concentrated > 1e-12) ok = false;

    return {"speedup_ratio", ok,
            {{"instances", ran},
             {"min_delta", min_delta},
             {"max_abs_error_equal_case", worst_equal},
             {"max_rel_error_concentrated_case", worst_concentrated}}};
}

CheckResult check_ratio_unbiased_exact(InjectedFault fault) {
    Rng rng = derive_stream(11, 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t n = 1; n <= 8; ++n) {
        std::vector<Eigen::VectorXd> terms(n, Eigen::VectorXd(3));
        for (auto& t : terms) {
            for (Eigen::Index d = 0; d < 3; ++d) t(d) = normal(rng);
        }
        Eigen::VectorXd total = Eigen::VectorXd::Zero(3);
        for (const auto& t : terms) total += t;

        for (std::size_t b = 1; b <= n; ++b) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
            std::size_t subsets = 0;
            for (unsigned mask = 0; mask < (1u << n); ++mask) {
                if (static_cast<std::size_t>(std::popcount(mask)) != b) continue;
                std::vector<Eigen::VectorXd> picked;
                for (std::size_t k = 0; k < n; ++k) {
                    if (mask & (1u << k)) picked.push_back(terms[k]);
                }
                mean += estimate(picked, static_cast<double>(n), fault);
                ++subsets;
            }
            mean /= static_cast<double>(subsets);
            worst = std::max(worst, (mean - total).norm() / std::max(1.0, total.norm()));
            ++cases;
        }
    }
    return {"ratio_unbiased_exact", worst <= 1e-12, {{"cases", cases}, {"max_rel_error", worst}}};
}

CheckResult check_ratio_unbiased_monte_carlo(std::uint64_t seed, InjectedFault fault, std::size_t draws) {
    constexpr std::size_t kChunks = 64;
    constexpr std::size_t kSampled = 12;
    Rng rng = derive_stream(seed, 4);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::VectorXd> terms(kChunks, Eigen::VectorXd(3));
    Eigen::VectorXd total = Eigen::VectorXd::Zero(3);
    for (auto& t : terms) {
        for (Eigen::Index d = 0; d < 3; ++d) t(d) = 1.0 + normal(rng);
        total += t;
    }

    const std::vector<double> ones(kChunks, 1.0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sumsq = Eigen::VectorXd::Zero(3);
    std::vector<Eigen::VectorXd> picked;
    for (std::size_t i = 0; i < draws; ++i) {
        picked.clear();
        for (auto k : weighted_sample_without_replacement(ones, kSampled, rng)) picked.push_back(terms[k]);
        const Eigen::VectorXd est = estimate(picked, static_cast<double>(kChunks), fault);
        sum += est;
        sumsq += est.cwiseAbs2();
    }
    const double n = static_cast<double>(draws);
    const Eigen::VectorXd mean = sum / n;
    const Eigen::VectorXd se = ((sumsq / n - mean.cwiseAbs2()) * (n / (n - 1.0)) / n).cwiseSqrt();
    double worst_z = 0.0;
    for (Eigen::Index d = 0; d < 3; ++d) worst_z = std::max(worst_z, std::abs(mean(d) - total(d)) / se(d));
    return {"ratio_unbiased_monte_carlo", worst_z <= 3.0,
            {{"chunks", kChunks}, {"sampled", kSampled}, {"draws", draws}, {"max_z", worst_z}}};
}

CheckResult check_bias_bound(std::uint64_t seed, std::size_t budget, std::size_t draws) {
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);

    RolloutGroup group;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng = derive_stream(seed, 5, attempt);
        group = sample_group(spec, policy, 10, rng);
        if (group.has_reward_variance()) break;
    }
    const Eigen::MatrixXd full = full_loss_grad(group, policy);
    const auto stats = phase_gradient_stats(group, policy);

    PhaseArray<double> norms{}, root_var{};
    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        if (!stats.phases[c]) continue;
        norms[c] = stats.phases[c]->contribution.norm();
        root_var[c] = std::sqrt(stats.phases[c]->variance.value_or(0.0));
    }

    std::vector<std::pair<std::string, PhaseArray<double>>> tables;
    PhaseScoreState state(5, 0.1);
    state.append(compute_phase_scores(group));
    state.refresh();
    tables.emplace_back("batch_scores", state.keep_probabilities());
    if (auto t = keep_probabilities_from_sums(root_var, 0.1)) tables.emplace_back("sqrt_variance", *t);
    tables.emplace_back("grasp_only", PhaseArray<double>{1.0, 1.0, 0.1, 0.1, 0.1});
    tables.emplace_back("graded", PhaseArray<double>{1.0, 0.5, 0.1, 0.1, 0.1});

    bool ok = true;
    json rows = json::array();
    for (const auto& [name, keep] : tables) {
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(full.rows(), full.cols());
        PhaseArray<double> picked{};
        for (std::size_t d = 0; d < draws; ++d) {
            std::vector<SelectionMask> masks;
            for (const auto& t : group.trajectories) {
                Rng rng = derive_stream(seed, 6000 + static_cast<std::uint64_t>(t.id), d);
                masks.push_back(sample_mask(t, keep, budget, rng));
            }
            const auto batch = shrink_batch(group, masks);
            for (const auto& s : batch.chunks) picked[index_of(s.phase)] += 1.0;
            mean += masked_loss_grad(batch, policy);
        }
        mean /= static_cast<double>(draws);
        const double bias = (mean - full).norm();
        const std::vector<double> p(keep.begin(), keep.end()), g(norms.begin(), norms.end());
        const double bound = bias_bound(p, g);
        if (!(bias <= bound)) ok = false;

        json inclusion = json::object();
        for (Phase ph : kAllPhases) {
            const auto c = index_of(ph);
            const double present = stats.phases[c] ? static_cast<double>(stats.phases[c]->chunks) : 0.0;
            inclusion[std::string(phase_name(ph))] = present > 0 ? picked[c] / (present * static_cast<double>(draws)) : 0.0;
        }
        rows.push_back({{"table", name}, {"keep", p}, {"bias", bias}, {"bound", bound}, {"inclusion", inclusion}});
    }
    return {"bias_bound", ok, {{"budget", budget}, {"draws", draws}, {"tables", rows}}};
}

CheckResult check_gradient_finite_differences(std::uint64_t seed, std::size_t instances) {
    Rng rng = derive_stream(seed, 7);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> small(1, 3);
    std::uniform_real_distribution<double> sigma(0.3, 1.5);
    constexpr double h = 1e-5;

    double worst = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const auto l = static_cast<std::size_t>(small(rng));
        const auto d = static_cast<std::size_t>(small(rng));
        const auto f = static_cast<std::size_t>(small(rng) + 1);
        GaussianChunkPolicy policy(l, d, f, sigma(rng));
        for (Eigen::Index j = 0; j < policy.weights().size(); ++j) policy.weights().data()[j] = normal(rng);

        std::vector<ChunkedTrajectory> trajs;
        const auto g = static_cast<std::size_t>(small(rng) + 1);
        for (std::size_t i = 0; i < g; ++i) {
            ChunkedTrajectory t;
            t.id = static_cast<int>(i);
            t.chunk_len = l;
            t.action_dim = d;
            t.reward = (i % 2 == 0) ? 1.0 : 0.0;
            const auto chunks = static_cast<std::size_t>(small(rng));
            for (std::size_t k = 0; k < chunks; ++k) {
                Chunk c;
                c.observation = Eigen::VectorXd(static_cast<Eigen::Index>(f));
                for (Eigen::Index j = 0; j < c.observation.size(); ++j) c.observation(j) = normal(rng);
                // Last chunk may be partial.
                const std::size_t steps = (k + 1 == chunks) ? static_cast<std::size_t>(1 + (inst % l)) : l;
                c.actions = Eigen::VectorXd(static_cast<Eigen::Index>(steps * d));
                for (Eigen::Index j = 0; j < c.actions.size(); ++j) c.actions(j) = normal(rng);
                t.chunks.push_back(std::move(c));
            }
            trajs.push_back(std::move(t));
        }
        const auto group = RolloutGroup::from(std::move(trajs));

        auto loss = [&](const GaussianChunkPolicy& p) {
            double total = 0.0;
            for (std::size_t i = 0; i < group.size(); ++i) {
                for (const auto& c : group.trajectories[i].chunks) {
                    total -= group.advantages[i] * p.log_prob(c.observation, c.actions);
                }
            }
            return total / static_cast<double>(group.size());
        };
        const Eigen::MatrixXd analytic = full_loss_grad(group, policy);
        Eigen::MatrixXd numeric(analytic.rows(), analytic.cols());
        GaussianChunkPolicy probe = policy;
        for (Eigen::Index j = 0; j < probe.weights().size(); ++j) {
            const double keep = probe.weights().data()[j];
            probe.weights().data()[j] = keep + h;
            const double up = loss(probe);
            probe.weights().data()[j] = keep - h;
            const double down = loss(probe);
            probe.weights().data()[j] = keep;
            numeric.data()[j] = (up - down) / (2.0 * h);
        }
        const double rel = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-8);
        worst = std::max(worst, rel);
    }
    return {"gradient_finite_differences", worst <= 1e-5, {{"instances", instances}, {"max_rel_error", worst}}};
}

CheckResult check_sampling_inclusion(std::uint64_t seed, std::size_t draws) {
    const std::vector<std::pair<std::vector<double>, std::size_t>> cases = {
        {{2, 1, 1}, 1}, {{1, 1, 1, 1}, 2}, {{3, 1, 2, 0.5, 1, 4}, 3}, {{0.1, 1, 1, 0.1, 1}, 2}, {{5, 1, 1, 1, 1, 1}, 3}};
    bool ok = true;
    double worst_z = 0.0;
    json rows = json::array();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& [w, m] = cases[ci];
        const auto exact = enumerate_inclusion(w, m);
        std::vector<double> hits(w.size(), 0.0);
        Rng rng = derive_stream(seed, 8, ci);
        for (std::size_t d = 0; d < draws; ++d) {
            for (auto k : weighted_sample_without_replacement(w, m, rng)) hits[k] += 1.0;
        }
        double case_z = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double freq = hits[k] / static_cast<double>(draws);
            const double sd = std::sqrt(exact[k] * (1.0 - exact[k]) / static_cast<double>(draws));
            const double z = sd > 0 ? std::abs(freq - exact[k]) / sd : (freq == exact[k] ? 0.0 : 1e9);
            case_z = std::max(case_z, z);
        }
        worst_z = std::max(worst_z, case_z);
        if (case_z > 3.0) ok = false;
        rows.push_back({{"weights", w}, {"m", m}, {"exact", exact}, {"max_z", case_z}});
    }

    Rng a = derive_stream(seed, 9), b = derive_stream(seed, 9);
    const std::vector<double> w = {0.3, 1.0, 0.7, 0.1, 0.9, 0.5, 0.2, 1.0};
    const bool reproducible =
        weighted_sample_without_replacement(w, 4, a) == weighted_sample_without_replacement(w, 4, b);
    if (!reproducible) ok = false;
    return {"sampling_inclusion", ok, {{"draws", draws}, {"max_z", worst_z}, {"reproducible", reproducible}, {"cases", rows}}};
}

CheckResult check_proxy_lower_bound(std::uint64_t seed) {
    // 1-D actions, one timestep per chunk, constant unit feature so that
    // d mu / d theta = 1. Success and failure actions are Gaussian around
    // their own means inside the normalized action range [-1, 1].
    Rng rng = derive_stream(seed, 10);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::vector<std::array<double, 4>> cases = {
        // mu_success, mu_failure, policy mean, sigma
        {0.5, -0.5, 0.0, 0.3}, {0.9, -0.9, 0.0, 1.0}, {0.2, 0.0, 0.1, 0.2}, {0.8, 0.1, 0.3, 0.5}, {-0.7, 0.6, 0.0, 0.8}};
    bool ok = true;
    json rows = json::array();
    for (const auto& [mu_s, mu_f, mu, sigma] : cases) {
        constexpr std::size_t kPerOutcome = 2000;
        std::vector<ChunkedTrajectory> trajs;
        for (std::size_t i = 0; i < 2 * kPerOutcome; ++i) {
            const bool success = i < kPerOutcome;
            ChunkedTrajectory t;
            t.id = static_cast<int>(i);
            t.chunk_len = 1;
            t.action_dim = 1;
            t.reward = success ? 1.0 : 0.0;
            Chunk c;
            c.phase = Phase::ActiveGrip;
            c.observation = Eigen::VectorXd::Ones(1);
            c.actions = Eigen::VectorXd::Constant(1, (success ? mu_s : mu_f) + sigma * normal(rng));
            t.chunks.push_back(std::move(c));
            trajs.push_back(std::move(t));
        }
        const auto group = RolloutGroup::from(std::move(trajs));
        const GaussianChunkPolicy policy(Eigen::MatrixXd::Constant(1, 1, mu), 1, 1, sigma);
        const double v = *phase_gradient_stats(group, policy).phases[index_of(Phase::ActiveGrip)]->variance;
        const double cc = *compute_phase_scores(group).score[index_of(Phase::ActiveGrip)];
        const double bound = cc * cc / (4.0 * sigma * sigma);
        if (!(v >= bound)) ok = false;
        rows.push_back({{"mu_success", mu_s}, {"mu_failure", mu_f}, {"sigma", sigma}, {"variance", v}, {"bound", bound}});
    }
    return {"proxy_lower_bound", ok, {{"cases", rows}}};
}

VerifyReport run_verification(const VerifyOptions& options) {
    options.validate();
    VerifyReport report;
    report.checks.push_back(check_neyman_optimality(options.seed));
    report.checks.push_back(check_speedup_ratio(options.seed));
    report.checks.push_back(check_ratio_unbiased_exact(options.fault));
    report.checks.push_back(check_ratio_unbiased_monte_carlo(options.seed, options.fault));
    report.checks.push_back(check_bias_bound(options.seed, options.budget));
    report.checks.push_back(check_gradient_finite_differences(options.seed));
    report.checks.push_back(check_sampling_inclusion(options.seed));
    report.checks.push_back(check_proxy_lower_bound(options.seed));
    return report;
}

} // namespace pcm
