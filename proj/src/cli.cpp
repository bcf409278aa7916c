#include "fkdiff/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "fkdiff/bench.hpp"
#include "fkdiff/error.hpp"
#include "fkdiff/identify.hpp"
#include "fkdiff/kinematics.hpp"
#include "fkdiff/urdf.hpp"

namespace fkdiff::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string format_number(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

json transform_json(const Transform4<double>& t) { return json(t.m); }

json pose_json(const PoseRPY<double>& p) { return json(p.as_array()); }

json chain_json(const FkEngine& engine) {
    return {{"base", engine.chain().base_link},
            {"end", engine.chain().end_link},
            {"n", engine.joint_count()},
            {"m", engine.dof()}};
}

json limit_json(const std::vector<LimitViolation>& v) {
    json out = json::array();
    for (const auto& l : v)
        out.push_back({{"index", l.batch}, {"joint", l.joint}, {"value", l.value}, {"lower", l.lower},
                       {"upper", l.upper}});
    return out;
}

struct ChainInputs {
    RobotModel model;
    FkEngine engine;
    std::vector<double> thetas;
    std::size_t count = 0;
};

struct ChainOptions {
    std::string urdf, base, end, configs;
    std::size_t samples = 1;
    std::uint64_t seed = 0;
    bool no_timing = false;
};

ChainInputs load_inputs(const ChainOptions& o) {
    RobotModel model = load_urdf(o.urdf);
    KinematicChain chain = extract_chain(model, o.base, o.end);
    const std::size_t m = chain.dof();
    std::vector<double> thetas;
    std::size_t count = 0;
    if (!o.configs.empty()) {
        const std::string text = read_file(o.configs);
        const std::string_view t = trim(text);
        const bool is_json = o.configs.ends_with(".json") || (!t.empty() && t.front() == '[');
        thetas = parse_configs(text, is_json, m, count);
    } else {
        count = o.samples;
        JointSampler sampler(chain, o.seed);
        thetas = sampler.draw(count);
    }
    if (count == 0) throw ShapeError("no joint configurations given");
    FkEngine engine(std::move(chain), count, EngineOptions{threads_from_env()});
    return {std::move(model), std::move(engine), std::move(thetas), count};
}

void add_chain_options(CLI::App* cmd, ChainOptions& o) {
    cmd->add_option("urdf", o.urdf, "URDF file")->required();
    cmd->add_option("--base", o.base, "Base link of the chain")->required();
    cmd->add_option("--end", o.end, "End link of the chain")->required();
    cmd->add_option("--configs", o.configs, "Joint configurations, CSV or JSON array of arrays");
    cmd->add_option("--samples", o.samples, "Random configurations to draw when --configs is absent")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Seed for sampled configurations");
    cmd->add_flag("--no-timing", o.no_timing, "Omit timing so output is reproducible byte for byte");
}

json base_document(std::string_view command) { return {{"schema", 1}, {"command", command}}; }

int cmd_validate(const std::string& path, std::ostream& out) {
    const RobotModel model = load_urdf(path);
    json doc = base_document("validate");
    doc["robot"] = model.name;
    doc["root"] = model.root_link;
    doc["links"] = model.links.size();
    doc["total_dof"] = model.total_dof();

    json joints = json::array();
    for (const Joint& j : model.joints) {
        json e = {{"name", j.name},
                  {"type", to_string(j.type)},
                  {"dof", dof(j.type)},
                  {"parent", j.parent_link},
                  {"child", j.child_link}};
        e["limits"] = j.limits ? json{{"lower", j.limits->lower}, {"upper", j.limits->upper}} : json(nullptr);
        joints.push_back(std::move(e));
    }
    doc["joints"] = std::move(joints);

    std::size_t depth = 0;
    json chains = json::array();
    for (const KinematicChain& c : leaf_chains(model)) {
        depth = std::max(depth, c.joint_count());
        chains.push_back({{"base", c.base_link}, {"end", c.end_link}, {"n", c.joint_count()}, {"m", c.dof()}});
    }
    doc["depth"] = depth;
    doc["leaf_chains"] = std::move(chains);
    out << doc.dump(2) << '\n';
    return kOk;
}

enum class FkFormat { Json, Csv };

int cmd_fk(const ChainOptions& o, bool intermediates, FkFormat format, std::ostream& out) {
    const ChainInputs in = load_inputs(o);
    const auto t0 = Clock::now();
    const TransformBatch<double> frames = in.engine.forward(in.thetas, intermediates);
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const std::size_t per = frames.per_batch;
    const std::size_t m = in.engine.dof();

    if (format == FkFormat::Csv) {
        out << "index,frame,x,y,z,alpha,beta,gamma,degenerate\n";
        for (std::size_t k = 0; k < in.count; ++k) {
            for (std::size_t i = 0; i < per; ++i) {
                const PoseRPY<double> p = pose_from_transform(frames.at(k, i));
                out << k << ',' << i;
                for (double v : p.as_array()) out << ',' << format_number(v);
                out << ',' << (p.degenerate ? 1 : 0) << '\n';
            }
        }
        return kOk;
    }

    json doc = base_document("fk");
    doc["chain"] = chain_json(in.engine);
    doc["seed"] = o.seed;
    json results = json::array();
    json degenerate = json::array();
    for (std::size_t k = 0; k < in.count; ++k) {
        json transforms = json::array();
        for (std::size_t i = 0; i < per; ++i) transforms.push_back(transform_json(frames.at(k, i)));
        const PoseRPY<double> pose = pose_from_transform(frames.at(k, per - 1));
        degenerate.push_back(pose.degenerate);
        results.push_back({{"index", k},
                           {"theta", std::vector<double>(in.thetas.begin() + k * m, in.thetas.begin() + (k + 1) * m)},
                           {"transforms", std::move(transforms)},
                           {"pose", pose_json(pose)}});
    }
    doc["results"] = std::move(results);
    doc["diagnostics"] = {{"degenerate", std::move(degenerate)},
                          {"limit_violations", limit_json(in.engine.check_limits(in.thetas))}};
    if (!o.no_timing) doc["diagnostics"]["timing"] = {{"seconds", seconds}, {"threads", in.engine.options().threads}};
    out << doc.dump(2) << '\n';
    return kOk;
}

int cmd_jacobian(const ChainOptions& o, std::ostream& out) {
    const ChainInputs in = load_inputs(o);
    const auto t0 = Clock::now();
    const std::vector<JacobianMatrix> jac = in.engine.pose_jacobians(in.thetas);
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const TransformBatch<double> frames = in.engine.forward(in.thetas);
    const std::size_t m = in.engine.dof();

    json doc = base_document("jacobian");
    doc["chain"] = chain_json(in.engine);
    doc["seed"] = o.seed;
    json results = json::array();
    json degenerate = json::array();
    for (std::size_t k = 0; k < in.count; ++k) {
        const PoseRPY<double> pose = pose_from_transform(frames.at(k, 0));
        degenerate.push_back(pose.degenerate);
        results.push_back({{"index", k},
                           {"theta", std::vector<double>(in.thetas.begin() + k * m, in.thetas.begin() + (k + 1) * m)},
                           {"pose", pose_json(pose)},
                           {"jacobian", {{"rows", jac[k].rows}, {"cols", jac[k].cols}, {"data", jac[k].data}}}});
    }
    doc["results"] = std::move(results);
    doc["diagnostics"] = {{"degenerate", std::move(degenerate)}};
    if (!o.no_timing) doc["diagnostics"]["timing"] = {{"seconds", seconds}, {"threads", in.engine.options().threads}};
    out << doc.dump(2) << '\n';
    return kOk;
}

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "gd"; }

int cmd_identify(const std::string& urdf, const std::string& config_path, bool no_timing, bool history,
                 std::ostream& out) {
    const RobotModel model = load_urdf(urdf);
    const IdentifyConfig config = parse_identify_config(read_file(config_path));
    const IdentifyResult r = run_identification(model, config);

    json doc = base_document("identify");
    doc["status"] = to_string(r.status);
    doc["config"] = {{"target_link", config.target_link},
                     {"base", config.base},
                     {"end", config.end},
                     {"batch_size", config.batch_size},
                     {"learning_rate", config.learning_rate},
                     {"max_steps", config.max_steps},
                     {"epsilon", config.epsilon},
                     {"grad_epsilon", config.grad_epsilon},
                     {"num_configurations", config.num_configurations},
                     {"optimizer", optimizer_name(config.optimizer)},
                     {"rotation_weight", config.rotation_weight},
                     {"init", config.init == InitMode::Model ? "model" : "zero"}};
    doc["seed"] = config.seed;
    doc["substituted_joint"] = substituted_joint_name(model, config.target_link);
    doc["results"] = {{"estimated", r.estimated.values},
                      {"ground_truth", r.ground_truth.values},
                      {"pose_error", r.pose_error},
                      {"param_error", r.param_error},
                      {"final_loss", r.final_loss},
                      {"steps", r.steps}};
    if (history) doc["results"]["loss_history"] = r.loss_history;
    doc["diagnostics"] = json::object();
    if (!no_timing) doc["diagnostics"]["timing"] = {{"seconds", r.wall_seconds}};
    out << doc.dump(2) << '\n';
    return r.status == IdentifyStatus::Converged ? kOk : kBudget;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = trim(rest.substr(0, comma));
        std::size_t v = 0;
        const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
        if (r.ec != std::errc() || r.ptr != item.data() + item.size() || v == 0)
            throw CLI::ValidationError("--batch-sizes", "expected positive integers, got '" + std::string(item) + "'");
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    if (out.empty()) throw CLI::ValidationError("--batch-sizes", "empty list");
    return out;
}

int cmd_bench(const ChainOptions& o, const std::string& sizes_text, double seconds, std::size_t rounds,
              std::ostream& out) {
    const std::vector<std::size_t> sizes = parse_sizes(sizes_text);
    const RobotModel model = load_urdf(o.urdf);
    const KinematicChain chain = extract_chain(model, o.base, o.end);
    if (chain.dof() == 0) throw ShapeError("benchmark needs a chain with at least one degree of freedom");
    const std::size_t threads = threads_from_env();
    const BenchReport report = run_bench(
        [&](std::size_t b) { return FkEngine(chain, b, EngineOptions{threads}); }, sizes,
        BenchOptions{seconds, rounds, o.seed});

    json doc = base_document("bench");
    doc["chain"] = {{"base", chain.base_link}, {"end", chain.end_link}, {"n", chain.joint_count()}, {"m", chain.dof()}};
    doc["seed"] = o.seed;
    json results = json::array();
    for (const BenchEntry& e : report.entries)
        results.push_back({{"batch_size", e.batch_size},
                           {"iterations", e.iterations},
                           {"seconds", e.seconds},
                           {"ops_per_sec", e.ops_per_sec},
                           {"ratio_to_baseline", e.ops_per_sec / report.baseline.ops_per_sec}});
    doc["results"] = std::move(results);
    doc["baseline"] = {{"iterations", report.baseline.iterations},
                       {"seconds", report.baseline.seconds},
                       {"ops_per_sec", report.baseline.ops_per_sec}};
    doc["diagnostics"] = {{"machine", report.machine},
                          {"threads", report.threads},
                          {"rounds", rounds},
                          {"op", report.op_definition}};
    out << doc.dump(2) << '\n';
    return kOk;
}

}  // namespace

std::vector<double> parse_configs(std::string_view text, bool is_json, std::size_t m, std::size_t& count) {
    std::vector<double> out;
    count = 0;
    auto check_width = [&](std::size_t width, std::size_t row) {
        if (width != m)
            throw ShapeError("configuration " + std::to_string(row) + " has " + std::to_string(width) +
                             " values, chain dof is " + std::to_string(m));
    };

    if (is_json) {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("configuration file: ") + e.what());
        }
        if (!doc.is_array()) throw ParseError("configuration file: expected an array of arrays");
        for (const json& row : doc) {
            if (!row.is_array()) throw ParseError("configuration " + std::to_string(count) + ": expected an array");
            check_width(row.size(), count);
            for (const json& v : row) {
                if (!v.is_number()) throw ParseError("configuration " + std::to_string(count) + ": non-numeric value");
                out.push_back(v.get<double>());
            }
            ++count;
        }
        return out;
    }

    std::vector<std::string_view> lines;
    for (std::string_view rest = text; !rest.empty();) {
        const auto nl = rest.find('\n');
        lines.push_back(rest.substr(0, nl));
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }
    bool first = true;
    for (std::string_view raw : lines) {
        const std::string_view line = trim(raw);
        if (line.empty()) {
            // a 0-dof chain has empty rows
            if (m == 0) ++count;
            continue;
        }
        if (first && std::any_of(line.begin(), line.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }) &&
            line.find("nan") == std::string_view::npos && line.find("inf") == std::string_view::npos) {
            first = false;
            continue;  // header
        }
        first = false;
        std::size_t width = 0;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            const std::string_view cell = trim(rest.substr(0, comma));
            double v = 0.0;
            const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || r.ec != std::errc() || r.ptr != cell.data() + cell.size())
                throw ParseError("configuration " + std::to_string(count) + ": invalid number '" + std::string(cell) +
                                 "'");
            if (!std::isfinite(v))
                throw NumericError("configuration " + std::to_string(count) + ": non-finite value");
            out.push_back(v);
            ++width;
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        check_width(width, count);
        ++count;
    }
    return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Differentiable batched forward kinematics"};
    app.name("fkdiff");
    app.require_subcommand(1);

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Parse a URDF and report tree statistics");
    validate->add_option("urdf", validate_path, "URDF file")->required();

    ChainOptions fk_opts;
    bool intermediates = false;
    std::string format = "json";
    auto* fk = app.add_subcommand("fk", "Forward kinematics for a batch of configurations");
    add_chain_options(fk, fk_opts);
    fk->add_flag("--intermediates", intermediates, "Emit every frame along the chain");
    fk->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));

    ChainOptions jac_opts;
    auto* jac = app.add_subcommand("jacobian", "6 x m pose Jacobians (x, y, z, alpha, beta, gamma)");
    add_chain_options(jac, jac_opts);

    std::string id_urdf, id_config;
    bool id_no_timing = false, id_history = false;
    auto* identify = app.add_subcommand("identify", "Identify one link by substituting a trainable 6-DoF joint");
    identify->add_option("urdf", id_urdf, "URDF file")->required();
    identify->add_option("config", id_config, "Identification config (JSON)")->required();
    identify->add_flag("--no-timing", id_no_timing, "Omit wall time");
    identify->add_flag("--history", id_history, "Include the per-step loss");

    ChainOptions bench_opts;
    std::string sizes = "1,256,1024,4096";
    double seconds = 0.5;
    auto* bench = app.add_subcommand("bench", "FK throughput across batch sizes");
    bench->add_option("urdf", bench_opts.urdf, "URDF file")->required();
    bench->add_option("--base", bench_opts.base, "Base link of the chain")->required();
    bench->add_option("--end", bench_opts.end, "End link of the chain")->required();
    bench->add_option("--batch-sizes", sizes, "Comma-separated batch sizes");
    bench->add_option("--seconds", seconds, "Minimum timed seconds per measurement")->check(CLI::NonNegativeNumber);
    bench->add_option("--seed", bench_opts.seed, "Seed for random inputs");
    std::size_t rounds = 3;
    bench->add_option("--rounds", rounds, "Interleaved rounds per measurement; the fastest is reported")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*validate) return cmd_validate(validate_path, out);
        if (*fk) return cmd_fk(fk_opts, intermediates, format == "csv" ? FkFormat::Csv : FkFormat::Json, out);
        if (*jac) return cmd_jacobian(jac_opts, out);
        if (*identify) return cmd_identify(id_urdf, id_config, id_no_timing, id_history, out);
        if (*bench) return cmd_bench(bench_opts, sizes, seconds, rounds, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const ChainError& e) {
        err << "chain error: " << e.what() << '\n';
        return kChain;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << '\n';
        return kShape;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kShape;
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"fkdiff"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fkdiff::cli
