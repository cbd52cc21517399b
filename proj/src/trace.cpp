#include "pcm/trace.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

namespace pcm {

using nlohmann::json;

void TraceRecord::validate() const {
    if (chunk_len == 0) throw InvalidInput("chunk_len must be positive");
    if (action_dim == 0) throw InvalidInput("action_dim must be positive");
    if (gripper.empty()) throw InvalidInput("gripper trace is empty");
    if (actions.size() != gripper.size() * action_dim) throw InvalidInput("actions must hold T*D values");
    if (observations.size() != chunk_count()) throw InvalidInput("need one observation per chunk");
    for (const auto& o : observations) {
        if (o.size() != observations.front().size()) throw InvalidInput("observations differ in length");
    }
    for (double g : gripper) {
        if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("gripper commands must lie in [0,1]");
    }
    if (phases && phases->size() != chunk_count()) throw InvalidInput("need one phase label per chunk");
}

TraceRecord parse_trace_line(const std::string& line) {
    TraceRecord r;
    try {
        const json j = json::parse(line);
        r.trajectory_id = j.at("trajectory_id").get<int>();
        r.task_id = j.at("task_id").get<int>();
        r.reward = j.at("reward").get<double>();
        r.chunk_len = j.at("chunk_len").get<std::size_t>();
        r.action_dim = j.at("action_dim").get<std::size_t>();
        r.gripper = j.at("gripper").get<std::vector<double>>();
        r.observations = j.at("observations").get<std::vector<std::vector<double>>>();
        r.actions = j.at("actions").get<std::vector<double>>();
        if (j.contains("phases")) {
            std::vector<Phase> phases;
            for (const auto& name : j.at("phases")) phases.push_back(parse_phase(name.get<std::string>()));
            r.phases = std::move(phases);
        }
    } catch (const json::exception& e) {
        throw InvalidInput(e.what());
    }
    if (r.reward != 0.0 && r.reward != 1.0) throw InvalidInput("reward must be 0 or 1");
    r.validate();
    return r;
}

std::string format_trace_line(const TraceRecord& r) {
    json j;
    j["trajectory_id"] = r.trajectory_id;
    j["task_id"] = r.task_id;
    j["reward"] = r.reward;
    j["chunk_len"] = r.chunk_len;
    j["action_dim"] = r.action_dim;
    j["gripper"] = r.gripper;
    j["observations"] = r.observations;
    j["actions"] = r.actions;
    if (r.phases) {
        json names = json::array();
        for (Phase p : *r.phases) names.push_back(std::string(phase_name(p)));
        j["phases"] = names;
    }
    return j.dump();
}

TraceReadResult read_traces(std::istream& in) {
    TraceReadResult out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.records.push_back(parse_trace_line(line));
        } catch (const InvalidInput& e) {
            out.errors.push_back({n, e.what()});
        }
    }
    return out;
}

void write_traces(std::ostream& out, const std::vector<TraceRecord>& records) {
    for (const auto& r : records) out << format_trace_line(r) << '\n';
}

ChunkedTrajectory to_trajectory(const TraceRecord& r, const LabelingConfig& labeling) {
    r.validate();
    ChunkedTrajectory t;
    t.id = r.trajectory_id;
    t.task = r.task_id;
    t.reward = r.reward;
    t.chunk_len = r.chunk_len;
    t.action_dim = r.action_dim;
    t.gripper = r.gripper;

    const auto phases = r.phases ? *r.phases : label_trace({r.gripper, r.chunk_len}, labeling);
    const std::size_t n = r.chunk_count();
    t.chunks.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t first = k * r.chunk_len;
        const std::size_t steps = std::min(r.chunk_len, r.gripper.size() - first);
        Chunk c;
        c.phase = phases[k];
        c.observation = Eigen::Map<const Eigen::VectorXd>(r.observations[k].data(),
                                                          static_cast<Eigen::Index>(r.observations[k].size()));
        c.actions = Eigen::Map<const Eigen::VectorXd>(r.actions.data() + first * r.action_dim,
                                                      static_cast<Eigen::Index>(steps * r.action_dim));
        t.chunks.push_back(std::move(c));
    }
    return t;
}

TraceRecord to_record(const ChunkedTrajectory& t, bool include_phases) {
    TraceRecord r;
    r.trajectory_id = t.id;
    r.task_id = t.task;
    r.reward = t.reward;
    r.chunk_len = t.chunk_len;
    r.action_dim = t.action_dim;
    r.gripper = t.gripper;
    std::vector<Phase> phases;
    for (const auto& c : t.chunks) {
        r.observations.emplace_back(c.observation.data(), c.observation.data() + c.observation.size());
        r.actions.insert(r.actions.end(), c.actions.data(), c.actions.data() + c.actions.size());
        phases.push_back(c.phase);
    }
    if (include_phases) r.phases = std::move(phases);
    return r;
}

} // namespace pcm
