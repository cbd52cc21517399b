// pcm: train / analyze / allocate / sweep-budget / verify / rollouts
//
// exit codes: 0 ok, 1 invalid input, 2 verification failure

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcm/allocation.hpp"
#include "pcm/analysis.hpp"
#include "pcm/toyworld.hpp"
#include "pcm/trace.hpp"
#include "pcm/trainer.hpp"
#include "pcm/verify.hpp"

namespace {

using nlohmann::json;

pcm::ToyTaskSpec spec_for_chunks(std::size_t chunks) {
    if (chunks == 16) return pcm::default_toy_spec();
    if (chunks == 64) return pcm::long_horizon_toy_spec();
    throw pcm::InvalidInput("--chunks-per-traj must be 16 or 64");
}

pcm::TraceReadResult load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pcm::InvalidInput("cannot open " + path);
    return pcm::read_traces(in);
}

void report_trace_errors(const std::vector<pcm::TraceError>& errors) {
    for (const auto& e : errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
}

void emit(const json& j, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw pcm::InvalidInput("cannot write " + out);
    f << j.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-aware chunk masking for group-relative policy optimization"};
    app.require_subcommand(1);

    // train
    pcm::TrainConfig tc;
    std::string mode = "pcm", train_out = "metrics.csv";
    std::size_t chunks_per_traj = 16;
    std::optional<double> clip;
    auto* train = app.add_subcommand("train", "run the GRPO loop on the toy task and write per-step metrics");
    train->add_option("--mode", mode, "pcm | vanilla | random-mask | full-mask")->capture_default_str();
    train->add_option("--budget", tc.budget, "chunks kept per trajectory")->capture_default_str();
    train->add_option("--group-size", tc.group_size)->capture_default_str();
    train->add_option("--refresh", tc.refresh_window, "keep-table refresh window T_rc")->capture_default_str();
    train->add_option("--pmin", tc.p_min)->capture_default_str();
    train->add_option("--lr", tc.learning_rate)->capture_default_str();
    train->add_option("--steps", tc.steps)->capture_default_str();
    train->add_option("--seed", tc.seed)->capture_default_str();
    train->add_option("--seeds", tc.seeds, "seeds to average")->capture_default_str();
    train->add_option("--eval-rollouts", tc.eval_rollouts)->capture_default_str();
    train->add_option("--clip", clip, "optional ratio clip");
    train->add_option("--chunks-per-traj", chunks_per_traj, "16 (default toy) or 64 (long horizon)")
        ->capture_default_str();
    train->add_option("--out", train_out, "metrics CSV, - for stdout")->capture_default_str();

    // rollouts
    std::size_t groups = 20, group_size = 10, roll_chunks = 16;
    std::uint64_t roll_seed = 0;
    std::string roll_out = "-";
    auto* rollouts = app.add_subcommand("rollouts", "write toy rollouts from the initial policy as JSONL traces");
    rollouts->add_option("--groups", groups)->capture_default_str();
    rollouts->add_option("--group-size", group_size)->capture_default_str();
    rollouts->add_option("--chunks-per-traj", roll_chunks)->capture_default_str();
    rollouts->add_option("--seed", roll_seed)->capture_default_str();
    rollouts->add_option("--out", roll_out)->capture_default_str();

    // analyze
    pcm::AnalysisConfig ac;
    std::string analyze_in, analyze_out;
    auto* analyze = app.add_subcommand("analyze", "phase scores, keep table and masks for recorded traces");
    analyze->add_option("traces", analyze_in, "JSONL trace file")->required();
    analyze->add_option("--budget", ac.budget)->capture_default_str();
    analyze->add_option("--pmin", ac.p_min)->capture_default_str();
    analyze->add_option("--seed", ac.seed)->capture_default_str();
    analyze->add_option("--out", analyze_out);

    // allocate
    std::vector<double> counts, variances, keep;
    double budget = 12.0;
    auto* allocate = app.add_subcommand("allocate", "Neyman allocation for given phase counts and variances");
    allocate->add_option("--counts", counts, "N_c per phase")->required()->delimiter(',');
    allocate->add_option("--variances", variances, "V_c per phase")->required()->delimiter(',');
    allocate->add_option("--budget", budget)->capture_default_str();
    allocate->add_option("--keep", keep, "optional keep probabilities for the bias bound")->delimiter(',');
    std::vector<double> grad_norms;
    allocate->add_option("--grad-norms", grad_norms, "phase gradient norms for the bias bound")->delimiter(',');

    // sweep-budget
    std::string sweep_in, sweep_out;
    auto* sweep = app.add_subcommand("sweep-budget", "cumulative phase-score capture curve and its knee");
    sweep->add_option("traces", sweep_in, "JSONL trace file")->required();
    sweep->add_option("--out", sweep_out);

    // verify
    pcm::VerifyOptions vo;
    std::string fault = "none", verify_out;
    auto* verify = app.add_subcommand("verify", "run the theory check suite");
    verify->add_option("--seed", vo.seed)->capture_default_str();
    verify->add_option("--budget", vo.budget)->capture_default_str();
    verify->add_option("--inject-fault", fault, "none | drop-ratio-scale")->capture_default_str();
    verify->add_option("--out", verify_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train) {
            tc.mode = pcm::parse_mode(mode);
            tc.clip_ratio = clip;
            const auto spec = spec_for_chunks(chunks_per_traj);
            const auto curve = pcm::train_seeds(tc, spec);
            if (train_out == "-") {
                pcm::write_metrics_csv(std::cout, curve);
            } else {
                std::ofstream f(train_out);
                if (!f) throw pcm::InvalidInput("cannot write " + train_out);
                pcm::write_metrics_csv(f, curve);
                std::cerr << "final success (last 10 steps): " << pcm::final_success(curve) << '\n';
            }
            return 0;
        }
        if (*rollouts) {
            const auto spec = spec_for_chunks(roll_chunks);
            if (group_size < 2) throw pcm::InvalidInput("group size must be >= 2");
            const auto policy = pcm::sft_policy(spec);
            std::vector<pcm::TraceRecord> records;
            for (std::size_t g = 0; g < groups; ++g) {
                pcm::Rng rng = pcm::derive_stream(roll_seed, 3, g);
                const auto group = pcm::sample_group(spec, policy, group_size, rng,
                                                     static_cast<int>(g * group_size));
                for (const auto& t : group.trajectories) {
                    auto r = pcm::to_record(t, false);
                    r.task_id = static_cast<int>(g);
                    records.push_back(std::move(r));
                }
            }
            if (roll_out == "-") {
                pcm::write_traces(std::cout, records);
            } else {
                std::ofstream f(roll_out);
                if (!f) throw pcm::InvalidInput("cannot write " + roll_out);
                pcm::write_traces(f, records);
            }
            return 0;
        }
        if (*analyze) {
            auto loaded = load_traces(analyze_in);
            report_trace_errors(loaded.errors);
            auto report = pcm::analyze(loaded.records, ac);
            report.errors = loaded.errors;
            emit(pcm::to_json(report), analyze_out);
            // Nothing analyzable counts as invalid input.
            return report.keep ? 0 : 1;
        }
        if (*allocate) {
            pcm::PhaseStats stats{counts, variances, budget};
            auto plan = pcm::plan_allocation(stats);
            if (!keep.empty() || !grad_norms.empty()) {
                if (keep.size() != counts.size() || grad_norms.size() != counts.size()) {
                    throw pcm::InvalidInput("--keep and --grad-norms need one value per phase");
                }
                plan.bias_bound = pcm::bias_bound(keep, grad_norms);
            }
            json j{{"budgets", plan.budgets},
                   {"integer_budgets", pcm::integer_allocation(plan.budgets)},
                   {"variance", plan.variance},
                   {"min_variance", plan.min_variance},
                   {"uniform_variance", plan.uniform_variance},
                   {"speedup", plan.speedup}};
            j["bias_bound"] = plan.bias_bound ? json(*plan.bias_bound) : json(nullptr);
            std::cout << j.dump(2) << '\n';
            return 0;
        }
        if (*sweep) {
            auto loaded = load_traces(sweep_in);
            report_trace_errors(loaded.errors);
            emit(pcm::to_json(pcm::sweep_budget(loaded.records)), sweep_out);
            return 0;
        }
        if (*verify) {
            if (fault == "none") {
                vo.fault = pcm::InjectedFault::None;
            } else if (fault == "drop-ratio-scale") {
                vo.fault = pcm::InjectedFault::DropRatioScale;
            } else {
                throw pcm::InvalidInput("unknown fault: " + fault);
            }
            const auto report = pcm::run_verification(vo);
            for (const auto& c : report.checks) std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << '\n';
            emit(report.to_json(), verify_out);
            return report.passed() ? 0 : 2;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
