// Acceptance suite. One PASS/FAIL line per criterion; exit status is the
// number of failures. Oracles live here, not in the library: grids and
// enumerations are re-derived, gradients come from a hand-written Gaussian
// score, and sampling laws are enumerated from scratch.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcm/allocation.hpp"
#include "pcm/analysis.hpp"
#include "pcm/grpo_core.hpp"
#include "pcm/masking.hpp"
#include "pcm/phase_labeling.hpp"
#include "pcm/signal.hpp"
#include "pcm/toyworld.hpp"
#include "pcm/trace.hpp"
#include "pcm/trainer.hpp"

using namespace pcm;

namespace {

// Pinned tolerances.
constexpr double kNeymanRel = 1e-9;
constexpr double kGridStepFrac = 1e-3;
constexpr double kEqualDeltaAbs = 1e-12;
constexpr double kExactRatioAbs = 1e-12;
constexpr double kZ = 3.0;
constexpr double kFdRel = 1e-5;
constexpr double kConcentration = 0.10;
constexpr double kParityPoints = 0.05;
constexpr double kChunkFraction = 0.20;
constexpr double kAblationGap = 0.05;
constexpr double kKneeChunks = 1.0;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[violated: " << what << "] ";
        }
    }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- independent oracles -------------------------------------------------

double variance_at(const std::vector<double>& n, const std::vector<double>& v, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < n.size(); ++c) {
        const double w = n[c] * n[c] * v[c];
        if (w == 0.0) continue;
        if (b[c] <= 0.0) return INFINITY;
        s += w / b[c];
    }
    return s;
}

// Minimum over the grid by dynamic programming over phases (no convexity
// assumption): best[j] = min variance of the phases so far using j units.
double grid_minimum(const std::vector<double>& n, const std::vector<double>& v, double budget, double step) {
    const auto units = static_cast<std::size_t>(std::llround(budget / step));
    std::vector<double> best(units + 1, INFINITY), next(units + 1);
    best[0] = 0.0;
    for (std::size_t c = 0; c < n.size(); ++c) {
        const double w = n[c] * n[c] * v[c];
        std::fill(next.begin(), next.end(), INFINITY);
        for (std::size_t used = 0; used <= units; ++used) {
            if (!std::isfinite(best[used])) continue;
            for (std::size_t j = 0; used + j <= units; ++j) {
                double cost = 0.0;
                if (w > 0.0) cost = j == 0 ? INFINITY : w / (static_cast<double>(j) * step);
                next[used + j] = std::min(next[used + j], best[used] + cost);
            }
        }
        best.swap(next);
    }
    return best[units];
}

// Gradient of log N(a; W s, sigma^2 I) over the timesteps present in `a`.
Eigen::MatrixXd score(const GaussianChunkPolicy& p, const Eigen::VectorXd& obs, const Eigen::VectorXd& a) {
    const Eigen::MatrixXd& w = p.weights();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < a.size(); ++r) {
        const double resid = a(r) - w.row(r).dot(obs);
        g.row(r) = resid / (p.sigma() * p.sigma()) * obs.transpose();
    }
    return g;
}

double log_density(const GaussianChunkPolicy& p, const Eigen::VectorXd& obs, const Eigen::VectorXd& a) {
    const double s2 = p.sigma() * p.sigma();
    double lp = 0.0;
    for (Eigen::Index r = 0; r < a.size(); ++r) {
        const double resid = a(r) - p.weights().row(r).dot(obs);
        lp += -0.5 * resid * resid / s2 - 0.5 * std::log(2.0 * M_PI * s2);
    }
    return lp;
}

// Inclusion probabilities of successive draws proportional to the remaining
// weights, by recursion over the set of already-drawn items.
std::vector<double> inclusion_oracle(const std::vector<double>& w, std::size_t m) {
    const std::size_t n = w.size();
    std::vector<double> pi(n, 0.0);
    std::map<unsigned, double> layer{{0u, 1.0}};
    for (std::size_t draw = 0; draw < m; ++draw) {
        std::map<unsigned, double> next;
        for (const auto& [set, prob] : layer) {
            double rest = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (!(set & (1u << k))) rest += w[k];
            }
            for (std::size_t k = 0; k < n; ++k) {
                if (set & (1u << k)) continue;
                next[set | (1u << k)] += prob * w[k] / rest;
            }
        }
        layer.swap(next);
    }
    for (const auto& [set, prob] : layer) {
        for (std::size_t k = 0; k < n; ++k) {
            if (set & (1u << k)) pi[k] += prob;
        }
    }
    return pi;
}

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

// A fixed toy batch with mixed outcomes.
RolloutGroup toy_batch(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng = derive_stream(4242, 0, attempt);
        auto group = sample_group(spec, policy, 10, rng);
        if (group.has_reward_variance()) return group;
    }
}

// ---- criteria ------------------------------------------------------------

Outcome neyman_optimality() {
    Outcome o;
    const auto t0 = Clock::now();
    Rng rng(101);
    std::uniform_int_distribution<int> k_dist(1, 5), n_dist(0, 12), b_dist(1, 8);
    std::uniform_real_distribution<double> v_dist(0.0, 5.0);
    double worst_rel = 0.0, worst_gap = -INFINITY;
    int instances = 0;
    while (instances < 100) {
        const auto k = static_cast<std::size_t>(k_dist(rng));
        PhaseStats s;
        for (std::size_t c = 0; c < k; ++c) {
            s.counts.push_back(n_dist(rng));
            s.variances.push_back(v_dist(rng));
        }
        s.budget = b_dist(rng);
        double root = 0.0;
        for (std::size_t c = 0; c < k; ++c) root += s.counts[c] * std::sqrt(s.variances[c]);
        if (root <= 0.0) continue;
        ++instances;

        const auto b = neyman_allocation(s);
        const double at_b = estimator_variance(s, b);
        const double analytic = root * root / s.budget;
        worst_rel = std::max(worst_rel, std::abs(at_b - analytic) / analytic);
        const double grid = grid_minimum(s.counts, s.variances, s.budget, kGridStepFrac * s.budget);
        worst_gap = std::max(worst_gap, (analytic - grid) / analytic);
    }
    const double secs = seconds_since(t0);
    o.require(worst_rel <= kNeymanRel, "closed form vs variance at allocation");
    o.require(worst_gap <= kNeymanRel, "a grid point beats the optimum");
    o.require(secs < 10.0, "runtime < 10 s");
    o.detail << "instances=100 max_rel_err=" << worst_rel << " max_grid_improvement=" << worst_gap
             << " runtime_s=" << secs;
    return o;
}

Outcome speedup_ratio_bounds() {
    Outcome o;
    Rng rng(202);
    std::uniform_int_distribution<int> k_dist(1, 5), n_dist(0, 50);
    std::uniform_real_distribution<double> v_dist(0.0, 3.0);
    double min_delta = INFINITY;
    int done = 0;
    while (done < 10000) {
        const auto k = static_cast<std::size_t>(k_dist(rng));
        PhaseStats s;
        double num = 0.0, root = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            s.counts.push_back(n_dist(rng));
            s.variances.push_back(v_dist(rng));
            num += s.counts[c] * s.counts[c] * s.variances[c];
            root += s.counts[c] * std::sqrt(s.variances[c]);
        }
        if (root <= 0.0) continue;
        ++done;
        const double d = speedup_ratio(s);
        o.require(std::abs(d - static_cast<double>(k) * num / (root * root)) <= 1e-9 * d, "library matches K sum/sq");
        min_delta = std::min(min_delta, d);
    }
    o.require(min_delta >= 1.0 - 1e-12, "delta >= 1");

    double worst_equal = 0.0, worst_conc = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        PhaseStats eq, conc;
        for (std::size_t c = 0; c < k; ++c) {
            const double n = 3.0 + static_cast<double>(c);
            eq.counts.push_back(n);
            eq.variances.push_back(2.5 / (n * n));
            conc.counts.push_back(n);
            conc.variances.push_back(c == 0 ? 4.0 : 0.0);
        }
        worst_equal = std::max(worst_equal, std::abs(speedup_ratio(eq) - 1.0));
        worst_conc = std::max(worst_conc, std::abs(speedup_ratio(conc) - static_cast<double>(k)));
    }
    o.require(worst_equal <= kEqualDeltaAbs, "delta = 1 for equal N^2 V");
    o.require(worst_conc <= kEqualDeltaAbs * 5, "delta = K when concentrated");
    o.detail << "instances=10000 min_delta=" << min_delta << " equal_case_err=" << worst_equal
             << " concentrated_case_err=" << worst_conc;
    return o;
}

Outcome ratio_estimator_unbiased() {
    Outcome o;
    Rng rng(303);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst_exact = 0.0;
    for (std::size_t n = 1; n <= 8; ++n) {
        std::vector<Eigen::VectorXd> terms(n, Eigen::VectorXd(4));
        Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
        for (auto& t : terms) {
            for (Eigen::Index d = 0; d < 4; ++d) t(d) = nd(rng);
            g += t;
        }
        for (std::size_t b = 1; b <= n; ++b) {
            // All C(n, b) subsets via a selection vector permuted in order.
            std::vector<bool> pick(n, false);
            std::fill(pick.begin(), pick.begin() + static_cast<long>(b), true);
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
            double subsets = 0.0;
            do {
                std::vector<Eigen::VectorXd> s;
                for (std::size_t k = 0; k < n; ++k) {
                    if (pick[k]) s.push_back(terms[k]);
                }
                mean += ratio_estimator(s, static_cast<double>(n));
                subsets += 1.0;
            } while (std::prev_permutation(pick.begin(), pick.end()));
            mean /= subsets;
            worst_exact = std::max(worst_exact, (mean - g).cwiseAbs().maxCoeff());
        }
    }
    o.require(worst_exact <= kExactRatioAbs, "exact enumeration");

    constexpr std::size_t kN = 64, kB = 12, kDraws = 100000;
    std::vector<Eigen::VectorXd> terms(kN, Eigen::VectorXd(4));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
    for (auto& t : terms) {
        for (Eigen::Index d = 0; d < 4; ++d) t(d) = 0.5 + nd(rng);
        g += t;
    }
    std::vector<std::size_t> order(kN);
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
    std::vector<Eigen::VectorXd> s(kB);
    for (std::size_t i = 0; i < kDraws; ++i) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t j = 0; j < kB; ++j) s[j] = terms[order[j]];
        const Eigen::VectorXd e = ratio_estimator(s, static_cast<double>(kN));
        sum += e;
        sq += e.cwiseAbs2();
    }
    const double n = kDraws;
    const Eigen::VectorXd mean = sum / n;
    const Eigen::VectorXd se = ((sq / n - mean.cwiseAbs2()) / (n - 1.0)).cwiseSqrt();
    double z = 0.0;
    for (Eigen::Index d = 0; d < 4; ++d) z = std::max(z, std::abs(mean(d) - g(d)) / se(d));
    o.require(z <= kZ, "Monte Carlo within 3 SE");
    o.detail << "exact_max_abs_err=" << worst_exact << " mc_N=64 b=12 draws=1e5 max_z=" << z;
    return o;
}

Outcome bias_bound_holds() {
    Outcome o;
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    const auto group = toy_batch(spec, policy);
    const double gsize = static_cast<double>(group.size());

    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(policy.weights().rows(), policy.weights().cols());
    PhaseArray<Eigen::MatrixXd> gc;
    for (auto& m : gc) m = full;
    for (std::size_t i = 0; i < group.size(); ++i) {
        for (const auto& c : group.trajectories[i].chunks) {
            const Eigen::MatrixXd t = -group.advantages[i] * score(policy, c.observation, c.actions) / gsize;
            full += t;
            gc[index_of(c.phase)] += t;
        }
    }

    PhaseScoreState state(5, 0.1);
    state.append(compute_phase_scores(group));
    state.refresh();
    const std::vector<std::pair<std::string, PhaseArray<double>>> tables = {
        {"batch", state.keep_probabilities()},
        {"grasp", {1.0, 1.0, 0.1, 0.1, 0.1}},
        {"graded", {1.0, 0.6, 0.3, 0.2, 0.1}},
        {"floor", {1.0, 0.1, 0.1, 0.1, 0.1}},
    };
    constexpr std::size_t kBudget = 12, kDraws = 10000;
    for (const auto& [name, keep] : tables) {
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(full.rows(), full.cols());
        for (std::size_t d = 0; d < kDraws; ++d) {
            std::vector<SelectionMask> masks;
            for (const auto& t : group.trajectories) {
                Rng rng = derive_stream(77, static_cast<std::uint64_t>(t.id), d);
                masks.push_back(sample_mask(t, keep, kBudget, rng));
            }
            mean += masked_loss_grad(shrink_batch(group, masks), policy);
        }
        mean /= static_cast<double>(kDraws);
        double bound = 0.0;
        for (std::size_t c = 0; c < kPhaseCount; ++c) bound += (1.0 - keep[c]) * gc[c].norm();
        const double bias = (mean - full).norm();
        o.require(bias <= bound, "bias <= bound for table " + name);
        o.detail << name << ":bias=" << bias << ",bound=" << bound << " ";
    }
    o.detail << "B=12 draws=1e4";
    return o;
}

Outcome gradients_match_fd() {
    Outcome o;
    Rng rng(505);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_int_distribution<int> small(1, 4);
    std::uniform_real_distribution<double> sig(0.4, 1.2);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const auto l = static_cast<std::size_t>(small(rng)), d = static_cast<std::size_t>(small(rng));
        const auto f = static_cast<std::size_t>(small(rng));
        GaussianChunkPolicy policy(l, d, f, sig(rng));
        for (Eigen::Index j = 0; j < policy.weights().size(); ++j) policy.weights().data()[j] = 0.5 * nd(rng);

        std::vector<ChunkedTrajectory> trajs(static_cast<std::size_t>(small(rng) + 1));
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            auto& t = trajs[i];
            t.id = static_cast<int>(i);
            t.chunk_len = l;
            t.action_dim = d;
            t.reward = static_cast<double>(rng() % 2);
            const int chunks = small(rng);
            for (int k = 0; k < chunks; ++k) {
                Chunk c;
                c.observation = Eigen::VectorXd(static_cast<Eigen::Index>(f));
                for (Eigen::Index j = 0; j < c.observation.size(); ++j) c.observation(j) = nd(rng);
                const std::size_t steps = k + 1 == chunks ? 1 + rng() % l : l;
                c.actions = Eigen::VectorXd(static_cast<Eigen::Index>(steps * d));
                for (Eigen::Index j = 0; j < c.actions.size(); ++j) c.actions(j) = nd(rng);
                t.chunks.push_back(c);
            }
        }
        trajs[0].reward = 1.0;
        trajs[1].reward = 0.0;
        const auto group = RolloutGroup::from(trajs);

        auto loss = [&](const GaussianChunkPolicy& p) {
            double s = 0.0;
            for (std::size_t i = 0; i < group.size(); ++i) {
                for (const auto& c : group.trajectories[i].chunks) {
                    s -= group.advantages[i] * log_density(p, c.observation, c.actions);
                }
            }
            return s / static_cast<double>(group.size());
        };
        const Eigen::MatrixXd analytic = full_loss_grad(group, policy);
        Eigen::MatrixXd fd(analytic.rows(), analytic.cols());
        GaussianChunkPolicy probe = policy;
        const double h = 1e-5;
        for (Eigen::Index j = 0; j < probe.weights().size(); ++j) {
            const double w0 = probe.weights().data()[j];
            probe.weights().data()[j] = w0 + h;
            const double up = loss(probe);
            probe.weights().data()[j] = w0 - h;
            const double dn = loss(probe);
            probe.weights().data()[j] = w0;
            fd.data()[j] = (up - dn) / (2.0 * h);
        }
        worst = std::max(worst, (analytic - fd).norm() / std::max(fd.norm(), 1e-12));
        // Per-chunk score function as well.
        const auto& c0 = group.trajectories[0].chunks[0];
        const auto lp = policy.log_prob_grad(c0.observation, c0.actions);
        worst = std::max(worst, (lp.grad - score(policy, c0.observation, c0.actions)).norm() /
                                    std::max(lp.grad.norm(), 1e-12));
    }
    o.require(worst <= kFdRel, "relative error <= 1e-5");
    o.detail << "instances=100 max_rel_err=" << worst;
    return o;
}

Outcome proxy_tracks_variance() {
    Outcome o;
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    PhaseArray<double> c_mean{}, v_mean{};
    double rho_sum = 0.0, rho_min = 1.0;
    constexpr int kSeeds = 10;
    for (int seed = 0; seed < kSeeds; ++seed) {
        const auto gt = ground_truth_variance(spec, policy, 10000, 900 + seed);
        std::vector<double> c(gt.proxy.begin(), gt.proxy.end()), v(gt.variance.begin(), gt.variance.end());
        const double rho = spearman(c, v);
        rho_sum += rho;
        rho_min = std::min(rho_min, rho);
        for (std::size_t k = 0; k < kPhaseCount; ++k) {
            c_mean[k] += gt.proxy[k] / kSeeds;
            v_mean[k] += gt.variance[k] / kSeeds;
        }
    }
    double min_crit_c = INFINITY, min_crit_v = INFINITY, max_non_c = 0.0, max_non_v = 0.0;
    for (std::size_t k = 0; k < kPhaseCount; ++k) {
        if (spec.critical[k]) {
            min_crit_c = std::min(min_crit_c, c_mean[k]);
            min_crit_v = std::min(min_crit_v, v_mean[k]);
        } else {
            max_non_c = std::max(max_non_c, c_mean[k]);
            max_non_v = std::max(max_non_v, v_mean[k]);
        }
    }
    o.require(max_non_c < kConcentration * min_crit_c, "non-critical C_c < 10% of critical");
    o.require(max_non_v < kConcentration * min_crit_v, "non-critical V_c < 10% of critical");
    o.require(rho_sum / kSeeds == 1.0, "mean Spearman = 1");

    // Literal bound on balanced 1-D constructions with unit feature.
    Rng rng(606);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> mu(-0.9, 0.9), sd(0.2, 1.0);
    double worst_margin = INFINITY;
    for (int inst = 0; inst < 50; ++inst) {
        const double ms = mu(rng), mf = mu(rng), m0 = mu(rng), sigma = sd(rng);
        constexpr int kHalf = 2000;
        std::vector<double> a(2 * kHalf);
        for (int i = 0; i < 2 * kHalf; ++i) a[i] = (i < kHalf ? ms : mf) + sigma * nd(rng);
        // Balanced binary rewards: A = +1 / -1 (up to eps).
        double mean_x = 0.0, mean_s = 0.0, mean_f = 0.0;
        std::vector<double> x(a.size());
        for (int i = 0; i < 2 * kHalf; ++i) {
            const double adv = i < kHalf ? 1.0 : -1.0;
            x[i] = adv * (a[i] - m0) / (sigma * sigma);
            mean_x += x[i];
            (i < kHalf ? mean_s : mean_f) += a[i] / kHalf;
        }
        mean_x /= 2.0 * kHalf;
        double v = 0.0;
        for (double xi : x) v += (xi - mean_x) * (xi - mean_x);
        v /= 2.0 * kHalf - 1.0;
        const double cc = std::abs(mean_s - mean_f);
        worst_margin = std::min(worst_margin, v - cc * cc / (4.0 * sigma * sigma));
    }
    o.require(worst_margin >= 0.0, "V >= C^2/(4 sigma^2) on constructions");

    o.detail << "C=[";
    for (double c : c_mean) o.detail << c << ' ';
    o.detail << "] V=[";
    for (double v : v_mean) o.detail << v << ' ';
    o.detail << "] nonC/critC=" << max_non_c / min_crit_c << " nonV/critV=" << max_non_v / min_crit_v
             << " spearman_mean=" << rho_sum / kSeeds << " spearman_min=" << rho_min
             << " bound_min_margin=" << worst_margin;
    return o;
}

struct ModeRuns {
    std::map<TrainMode, std::vector<AveragedStep>> curves;
};

TrainConfig learning_config(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    c.budget = 3; // 3 of 16 chunks = 18.75%
    c.seeds = 5;
    c.steps = 300;
    return c;
}

const ModeRuns& mode_runs() {
    static const ModeRuns runs = [] {
        ModeRuns r;
        const auto spec = default_toy_spec();
        for (auto m : {TrainMode::Pcm, TrainMode::Vanilla, TrainMode::RandomMask, TrainMode::FullMask}) {
            r.curves[m] = train_seeds(learning_config(m), spec);
        }
        return r;
    }();
    return runs;
}

Outcome learning_parity() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto& runs = mode_runs();
    const double pcm = final_success(runs.curves.at(TrainMode::Pcm));
    const double van = final_success(runs.curves.at(TrainMode::Vanilla));
    double max_frac = 0.0;
    for (const auto& s : runs.curves.at(TrainMode::Pcm)) {
        if (s.chunks_total > 0 && s.chunks_used > 0) max_frac = std::max(max_frac, s.chunks_used / s.chunks_total);
    }
    o.require(std::abs(pcm - van) <= kParityPoints, "final gap <= 5 points");
    o.require(max_frac <= kChunkFraction, "<= 20% of chunks per step");

    // 64-chunk profile at the default budget: exactly 12/64 of chunks.
    TrainConfig lh;
    lh.steps = 20;
    lh.eval_rollouts = 5;
    const auto run = train(lh, long_horizon_toy_spec());
    bool exact = true;
    std::size_t updates = 0;
    for (const auto& m : run.steps) {
        if (m.group_skipped) continue;
        ++updates;
        exact = exact && m.chunks_total == 640 && m.chunks_used == 120;
    }
    o.require(exact && updates > 0, "exactly 18.75% on the 64-chunk profile");
    const double secs = seconds_since(t0);
    o.require(secs < 600.0, "runtime < 10 min");
    o.detail << "pcm=" << pcm << " vanilla=" << van << " gap=" << std::abs(pcm - van)
             << " max_chunk_fraction=" << max_frac << " long_horizon_updates=" << updates
             << " fraction_64=" << 120.0 / 640.0 << " runtime_s=" << secs;
    return o;
}

Outcome ablation_ordering() {
    Outcome o;
    const auto& runs = mode_runs();
    const double pcm = final_success(runs.curves.at(TrainMode::Pcm));
    const double rnd = final_success(runs.curves.at(TrainMode::RandomMask));
    const double full = final_success(runs.curves.at(TrainMode::FullMask));
    o.require(pcm - rnd >= kAblationGap, "pcm beats random_mask by >= 5 points");
    o.require(rnd - full >= kAblationGap, "random_mask beats full_mask by >= 5 points");
    o.detail << "B=3 seeds=5 pcm=" << pcm << " random_mask=" << rnd << " full_mask=" << full;
    return o;
}

Outcome masked_beats_importance_weighting() {
    Outcome o;
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    const auto group = toy_batch(spec, policy);
    PhaseScoreState state(5, 0.1);
    state.append(compute_phase_scores(group));
    state.refresh();
    const auto keep = state.keep_probabilities();

    constexpr std::size_t kBudget = 12, kDraws = 10000;
    const Eigen::Index dim = policy.weights().size();
    Eigen::VectorXd s_m = Eigen::VectorXd::Zero(dim), q_m = s_m, s_w = s_m, q_w = s_m;
    const double g = static_cast<double>(group.size());
    for (std::size_t d = 0; d < kDraws; ++d) {
        Eigen::MatrixXd masked = Eigen::MatrixXd::Zero(policy.weights().rows(), policy.weights().cols());
        Eigen::MatrixXd weighted = masked;
        for (std::size_t i = 0; i < group.size(); ++i) {
            const auto& t = group.trajectories[i];
            Rng rng = derive_stream(99, static_cast<std::uint64_t>(t.id), d);
            for (auto k : sample_mask(t, keep, kBudget, rng).indices) {
                const auto& c = t.chunks[k];
                const Eigen::MatrixXd term = -group.advantages[i] * score(policy, c.observation, c.actions) / g;
                masked += term;
                weighted += term / keep[index_of(c.phase)];
            }
        }
        const Eigen::Map<const Eigen::VectorXd> vm(masked.data(), dim), vw(weighted.data(), dim);
        s_m += vm;
        q_m += vm.cwiseAbs2();
        s_w += vw;
        q_w += vw.cwiseAbs2();
    }
    const double n = kDraws;
    const double var_m = (q_m.sum() - s_m.squaredNorm() / n) / (n - 1.0);
    const double var_w = (q_w.sum() - s_w.squaredNorm() / n) / (n - 1.0);
    o.require(var_m < var_w, "masked variance < 1/p weighted variance");
    o.detail << "B=12 draws=1e4 var_masked=" << var_m << " var_weighted=" << var_w << " ratio=" << var_m / var_w;
    return o;
}

Outcome sampling_matches_enumeration() {
    Outcome o;
    const std::vector<std::pair<std::vector<double>, std::size_t>> cases = {
        {{1.0, 2.0}, 1},
        {{4.0, 1.0, 1.0}, 2},
        {{0.5, 1.5, 3.0, 1.0}, 2},
        {{1.0, 0.1, 0.1, 1.0, 0.4}, 3},
        {{2.0, 0.3, 1.0, 0.7, 0.1, 1.2}, 3},
        {{1.0, 1.0, 1.0, 1.0, 1.0, 0.2}, 1},
    };
    constexpr std::size_t kDraws = 1000000;
    double worst_z = 0.0;
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& [w, m] = cases[ci];
        const auto pi = inclusion_oracle(w, m);
        std::vector<double> hits(w.size(), 0.0);
        Rng rng(7000 + ci);
        for (std::size_t d = 0; d < kDraws; ++d) {
            for (auto k : weighted_sample_without_replacement(w, m, rng)) hits[k] += 1.0;
        }
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double sd = std::sqrt(pi[k] * (1.0 - pi[k]) / kDraws);
            const double z = std::abs(hits[k] / kDraws - pi[k]) / sd;
            worst_z = std::max(worst_z, z);
        }
    }
    o.require(worst_z <= kZ, "within 3 sigma");

    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    const auto group = toy_batch(spec, policy);
    const PhaseArray<double> keep{1.0, 0.7, 0.2, 0.1, 0.1};
    bool same = true;
    for (const auto& t : group.trajectories) {
        Rng a = derive_stream(5, static_cast<std::uint64_t>(t.id), 3), b = derive_stream(5, static_cast<std::uint64_t>(t.id), 3);
        same = same && sample_mask(t, keep, 12, a).indices == sample_mask(t, keep, 12, b).indices;
    }
    o.require(same, "identical seeds give identical masks");
    o.detail << "cases=" << cases.size() << " draws=1e6 max_z=" << worst_z << " reproducible=" << same;
    return o;
}

Outcome labeling_golden() {
    Outcome o;
    using P = Phase;
    const P AP = P::Approach, PG = P::PreGrasp, AG = P::ActiveGrip, RR = P::ReleaseRamp, TL = P::Tail;
    struct Fixture {
        std::string name;
        std::vector<double> g;
        std::vector<P> want;
    };
    const std::vector<Fixture> fixtures = {
        {"single_grasp", {0.0, 0.2, 0.8, 0.8, 0.3, 0.0}, {AP, PG, AG, AG, RR, RR}},
        {"no_grasp", {0.0, 0.0, 0.0, 0.0}, {AP, AP, AP, AP}},
        {"tail", {0.0, 0.0, 0.9, 0.9, 0.0, 0.0, 0.0, 0.05}, {AP, AP, AG, AG, RR, RR, RR, TL}},
        // Two grasp cycles; the gap chunks are claimed by the windows.
        {"multi_grasp", {0.0, 0.3, 1.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.2, 0.9, 0.9, 0.0, 0.0},
         {AP, PG, AG, RR, RR, RR, AP, AP, PG, AG, AG, RR, RR}},
        // Isolated soft closure without a sustained interval.
        {"soft_no_interval", {0.0, 0.6, 0.2, 0.0}, {AP, AG, AP, AP}},
        // Pre-grasp window is capped at three chunks.
        {"window_cap", {0.2, 0.2, 0.2, 0.2, 0.8, 0.0}, {AP, PG, PG, PG, AG, RR}},
        // Band chunk after the release window is Approach, not Tail.
        {"late_band", {0.9, 0.0, 0.0, 0.0, 0.3, 0.0}, {AG, RR, RR, RR, AP, TL}},
    };
    int passed = 0;
    for (const auto& f : fixtures) {
        const bool ok = label_phases(f.g) == f.want;
        o.require(ok, "fixture " + f.name);
        passed += ok;
    }
    // Fractions from raw commands, including the partial trailing chunk.
    o.require(gripper_close_fraction({{1, 1, 1, 1, 0, 0, 0, 0}, 4}) == std::vector<double>{1.0, 0.0}, "fraction L=4");
    o.require(gripper_close_fraction({{1, 0, 1, 0, 1, 1}, 4}) == std::vector<double>{0.5, 1.0}, "partial chunk");

    // Flipping rewards leaves labels unchanged.
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    Rng rng(11);
    bool invariant = true;
    for (int i = 0; i < 20; ++i) {
        auto rec = to_record(generate_rollout(spec, policy, rng).trajectory, false);
        const auto before = to_trajectory(rec);
        rec.reward = 1.0 - rec.reward;
        const auto after = to_trajectory(rec);
        for (std::size_t k = 0; k < before.chunks.size(); ++k) invariant = invariant && before.chunks[k].phase == after.chunks[k].phase;
    }
    o.require(invariant, "labels invariant to reward flips");
    o.detail << "fixtures=" << passed << "/" << fixtures.size() << " reward_invariant=" << invariant;
    return o;
}

Outcome budget_sweep_knee() {
    Outcome o;
    // 100 chunks: 20 with linearly falling high scores, 80 low. The max gap
    // above the diagonal sits where scores cross the overall mean: chunk 20.
    std::vector<double> scores;
    for (int j = 0; j < 20; ++j) scores.push_back(2.0 - 0.05 * j);
    for (int j = 0; j < 80; ++j) scores.push_back(0.5 - 0.5 * j / 80.0);
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / 100.0;
    const auto curve = cumulative_capture(scores);
    const double knee_chunks = curve.knee_fraction * 100.0;
    o.require(mean > 0.5 && mean < 1.05, "constructed curve has its knee at 20");
    o.require(std::abs(knee_chunks - 20.0) <= kKneeChunks, "knee within one chunk of 20%");

    // Toy traces from the initial policy.
    const auto spec = default_toy_spec();
    const auto policy = sft_policy(spec);
    std::vector<TraceRecord> records;
    for (int g = 0; g < 30; ++g) {
        Rng rng = derive_stream(31, static_cast<std::uint64_t>(g));
        for (const auto& t : sample_group(spec, policy, 10, rng, g * 10).trajectories) {
            auto r = to_record(t, false);
            r.task_id = g;
            records.push_back(r);
        }
    }
    const auto sweep = sweep_budget(records);
    bool above = true;
    for (std::size_t j = 1; j + 1 < sweep.curve.fraction.size(); ++j) {
        above = above && sweep.curve.captured[j] > sweep.curve.fraction[j];
    }
    o.require(above, "toy curve strictly above the diagonal");
    // Capture at B=3 of 16 for reference.
    o.detail << "constructed_knee_chunks=" << knee_chunks << " toy_knee_fraction=" << sweep.curve.knee_fraction
             << " toy_capture_at_3of16=" << sweep.curve.captured[static_cast<std::size_t>(0.1875 * (sweep.curve.fraction.size() - 1))]
             << " strictly_above=" << above;
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"neyman allocation optimal on the budget grid", neyman_optimality},
        {"speedup ratio bounds", speedup_ratio_bounds},
        {"ratio estimator unbiased", ratio_estimator_unbiased},
        {"masked gradient bias bound", bias_bound_holds},
        {"score gradients match finite differences", gradients_match_fd},
        {"C_c tracks V_c on the toy task", proxy_tracks_variance},
        {"masked learning matches full GRPO", learning_parity},
        {"ablation ordering pcm > random > full", ablation_ordering},
        {"masked estimator variance below 1/p weighting", masked_beats_importance_weighting},
        {"weighted sampling inclusion law", sampling_matches_enumeration},
        {"phase labeling golden fixtures", labeling_golden},
        {"budget sweep knee and concentration", budget_sweep_knee},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        failures += !o.pass;
        std::printf("%s criterion %zu: %s | %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures;
}
