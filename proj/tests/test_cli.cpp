#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fkdiff/cli.hpp"
#include "fkdiff/error.hpp"
#include "fkdiff/identify.hpp"
#include "fkdiff/kinematics.hpp"
#include "fkdiff/urdf.hpp"

using namespace fkdiff;
using nlohmann::json;

namespace {

std::string data(const std::string& name) { return std::string(FKDIFF_TEST_DATA) + "/" + name; }

struct Invocation {
    int code;
    std::string out, err;
    json doc() const { return json::parse(out); }
};

Invocation run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Temporary file removed at scope exit.
struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& text)
        : path((std::filesystem::temp_directory_path() / ("fkdiff_test_" + name)).string()) {
        std::ofstream(path) << text;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, cli::kUsage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
    EXPECT_EQ(run({"fk", data("two_r_arm.urdf")}).code, cli::kUsage);  // missing --base/--end
    EXPECT_EQ(run({"--help"}).code, cli::kOk);
    EXPECT_EQ(run({"validate", data("missing.urdf")}).code, cli::kUsage);
    EXPECT_EQ(run({"fk", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--format", "xml"}).code,
              cli::kUsage);
    EXPECT_EQ(run({"bench", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--batch-sizes", "1,x"}).code,
              cli::kUsage);
}

TEST(Cli, Validate) {
    const Invocation ok = run({"validate", data("serial_arm4.urdf")});
    ASSERT_EQ(ok.code, cli::kOk) << ok.err;
    const json d = ok.doc();
    EXPECT_EQ(d["schema"], 1);
    EXPECT_EQ(d["total_dof"], 4);
    EXPECT_EQ(d["joints"].size(), 5u);

    const Invocation bad = run({"validate", data("joint_follows_joint.urdf")});
    EXPECT_EQ(bad.code, cli::kParse);
    EXPECT_NE(bad.err.find("second"), std::string::npos) << bad.err;

    // leaf chains against a direct walk of the model
    const Invocation br = run({"validate", data("branching.urdf")});
    ASSERT_EQ(br.code, cli::kOk);
    const RobotModel m = load_urdf(data("branching.urdf"));
    std::set<std::string> leaves;
    for (const auto& l : m.links)
        if (m.child_joints(l.name).empty()) leaves.insert(l.name);
    std::set<std::string> reported;
    const json doc = br.doc();
    for (const auto& c : doc["leaf_chains"]) {
        EXPECT_EQ(c["base"], "torso");
        reported.insert(c["end"].get<std::string>());
    }
    EXPECT_EQ(reported, leaves);
}

TEST(Cli, ExitCodes) {
    const std::string arm = data("serial_arm4.urdf");
    EXPECT_EQ(run({"fk", data("joint_follows_joint.urdf"), "--base", "a", "--end", "b"}).code, cli::kParse);
    EXPECT_EQ(run({"fk", arm, "--base", "base_link", "--end", "nowhere"}).code, cli::kChain);
    EXPECT_EQ(run({"fk", arm, "--base", "link4", "--end", "base_link"}).code, cli::kChain);
    EXPECT_EQ(run({"fk", arm, "--base", "base_link", "--end", "link4", "--configs", data("two_r_configs.csv")}).code,
              cli::kShape);
    {
        TempFile bad("bad.csv", "1,2\n3,zz\n");
        EXPECT_EQ(run({"fk", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--configs", bad.path}).code,
                  cli::kParse);
    }
    {
        TempFile nan("nan.csv", "1,nan\n");
        EXPECT_EQ(run({"fk", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--configs", nan.path}).code,
                  cli::kShape);
    }
    {
        TempFile broken("broken.json", "[[1, 2], [3");
        EXPECT_EQ(
            run({"fk", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--configs", broken.path}).code,
            cli::kParse);
    }
    {
        TempFile cfg("bad_cfg.json", R"({"target_link":"link2","base":"base_link","end":"link4","typo":1})");
        EXPECT_EQ(run({"identify", arm, cfg.path}).code, cli::kUsage);
    }
    {
        TempFile cfg("short_cfg.json",
                     R"({"target_link":"link2","base":"base_link","end":"link4","max_steps":3})");
        const Invocation r = run({"identify", arm, cfg.path, "--no-timing"});
        EXPECT_EQ(r.code, cli::kBudget);
        EXPECT_EQ(r.doc()["status"], "budget_exhausted");
        EXPECT_EQ(r.doc()["results"]["steps"], 3);
    }
}

TEST(Cli, TwoLinkArm) {
    for (const char* file : {"two_r_configs.csv", "two_r_configs.json"}) {
        const Invocation r = run({"fk", data("two_r_arm.urdf"), "--base", "base", "--end", "tool", "--configs", data(file),
                           "--no-timing"});
        ASSERT_EQ(r.code, cli::kOk) << r.err;
        const json d = r.doc();
        EXPECT_EQ(d["chain"]["n"], 3);
        EXPECT_EQ(d["chain"]["m"], 2);
        const auto& pose = d["results"][0]["pose"];
        EXPECT_NEAR(pose[0].get<double>(), 0.0, 1e-9) << file;
        EXPECT_NEAR(pose[1].get<double>(), 2.0, 1e-9);
        EXPECT_NEAR(pose[2].get<double>(), 0.0, 1e-9);
        EXPECT_FALSE(d["diagnostics"].contains("timing"));
    }
}

TEST(Cli, Intermediates) {
    const Invocation r = run({"fk", data("serial_arm4.urdf"), "--base", "base_link", "--end", "link3", "--samples", "4",
                       "--intermediates", "--no-timing"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const json d = r.doc();
    ASSERT_EQ(d["results"].size(), 4u);
    for (const auto& res : d["results"]) {
        EXPECT_EQ(res["transforms"].size(), 3u);
        for (const auto& t : res["transforms"]) EXPECT_EQ(t.size(), 16u);
    }
}

TEST(Cli, CsvFormat) {
    const Invocation r = run({"fk", data("serial_arm4.urdf"), "--base", "base_link", "--end", "link3", "--samples", "2",
                       "--intermediates", "--format", "csv"});
    ASSERT_EQ(r.code, cli::kOk);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "index,frame,x,y,z,alpha,beta,gamma,degenerate");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 6);
}

TEST(Cli, ZeroDofChain) {
    const Invocation fk = run({"fk", data("fixed_only.urdf"), "--base", "world", "--end", "sensor", "--configs",
                        data("empty_configs.json"), "--no-timing"});
    ASSERT_EQ(fk.code, cli::kOk) << fk.err;
    const json d = fk.doc();
    ASSERT_EQ(d["results"].size(), 2u);
    EXPECT_EQ(d["results"][0]["transforms"], d["results"][1]["transforms"]);
    EXPECT_EQ(d["chain"]["m"], 0);

    const Invocation jac = run({"jacobian", data("fixed_only.urdf"), "--base", "world", "--end", "sensor", "--no-timing"});
    ASSERT_EQ(jac.code, cli::kOk) << jac.err;
    const json j = jac.doc()["results"][0]["jacobian"];
    EXPECT_EQ(j["rows"], 6);
    EXPECT_EQ(j["cols"], 0);
    EXPECT_TRUE(j["data"].empty());
}

TEST(Cli, SingleJointJacobian) {
    TempFile zero("zero.csv", "0\n");
    const Invocation r = run({"jacobian", data("single_revolute.urdf"), "--base", "base", "--end", "tip", "--configs",
                       zero.path, "--no-timing"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const json j = r.doc()["results"][0]["jacobian"];
    EXPECT_EQ(j["rows"], 6);
    EXPECT_EQ(j["cols"], 1);
    // tip at 0.7 along x: d/dtheta = (0, 0.7, 0, 0, 0, 1)
    const std::vector<double> want{0, 0.7, 0, 0, 0, 1};
    for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(j["data"][r].get<double>(), want[r], 1e-12);
}

TEST(Cli, OutputEqualsLibraryExactly) {
    const RobotModel m = load_urdf(data("all_types.urdf"));
    const KinematicChain c = extract_chain(m, "l0", "l6");
    const std::vector<double> th = JointSampler(c, 42).draw(5);
    const FkEngine e(c, 5);
    const auto frames = e.forward(th, true);
    const auto jac = e.pose_jacobians(th);

    const Invocation fk = run({"fk", data("all_types.urdf"), "--base", "l0", "--end", "l6", "--samples", "5", "--seed",
                        "42", "--intermediates", "--no-timing"});
    ASSERT_EQ(fk.code, cli::kOk) << fk.err;
    const json d = fk.doc();
    EXPECT_EQ(d["seed"], 42);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(d["results"][k]["theta"].get<std::vector<double>>(),
                  std::vector<double>(th.begin() + k * e.dof(), th.begin() + (k + 1) * e.dof()));
        for (std::size_t i = 0; i < e.joint_count(); ++i)
            EXPECT_EQ(d["results"][k]["transforms"][i].get<std::vector<double>>(),
                      std::vector<double>(frames.at(k, i).m.begin(), frames.at(k, i).m.end()));
    }

    const Invocation jr = run({"jacobian", data("all_types.urdf"), "--base", "l0", "--end", "l6", "--samples", "5",
                        "--seed", "42", "--no-timing"});
    ASSERT_EQ(jr.code, cli::kOk) << jr.err;
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_EQ(jr.doc()["results"][k]["jacobian"]["data"].get<std::vector<double>>(), jac[k].data);
}

TEST(Cli, ByteIdenticalAcrossRuns) {
    for (const char* cmd : {"fk", "jacobian"}) {
        const std::vector<std::string> args{cmd,      data("serial_arm4_rot.urdf"), "--base", "base_link", "--end",
                                            "camera", "--samples", "50", "--seed", "3", "--no-timing"};
        const Invocation a = run(args), b = run(args);
        ASSERT_EQ(a.code, cli::kOk);
        EXPECT_EQ(a.out, b.out);
    }
    // a different seed changes the document
    EXPECT_NE(run({"fk", data("serial_arm4.urdf"), "--base", "base_link", "--end", "link4", "--seed", "1",
                   "--no-timing"})
                  .out,
              run({"fk", data("serial_arm4.urdf"), "--base", "base_link", "--end", "link4", "--seed", "2",
                   "--no-timing"})
                  .out);
}

TEST(Cli, IdentifyDocument) {
    const Invocation r = run({"identify", data("serial_arm4.urdf"), data("identify_translation.json"), "--history"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const json d = r.doc();
    EXPECT_EQ(d["status"], "converged");
    EXPECT_EQ(d["results"]["estimated"].size(), 6u);
    EXPECT_EQ(d["results"]["loss_history"].size(), d["results"]["steps"].get<std::size_t>());
    for (const auto& e : d["results"]["pose_error"]) EXPECT_LT(e.get<double>(), 1e-4);
    EXPECT_TRUE(d["diagnostics"].contains("timing"));
}

TEST(Cli, BenchSmoke) {
    const auto t0 = std::chrono::steady_clock::now();
    const Invocation r = run({"bench", data("serial_arm4.urdf"), "--base", "base_link", "--end", "link4", "--batch-sizes",
                       "1", "--seconds", "0.1", "--rounds", "1"});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const json d = r.doc();
    ASSERT_EQ(d["results"].size(), 1u);
    EXPECT_EQ(d["results"][0]["batch_size"], 1);
    EXPECT_GT(d["results"][0]["ops_per_sec"].get<double>(), 0.0);
    EXPECT_GT(d["baseline"]["ops_per_sec"].get<double>(), 0.0);
    EXPECT_TRUE(d["diagnostics"].contains("machine"));
    EXPECT_LT(secs, 2.0);
}

TEST(Cli, ParseConfigs) {
    std::size_t count = 0;
    EXPECT_EQ(cli::parse_configs("a,b\n1,2\n3.5, -4\n", false, 2, count), (std::vector<double>{1, 2, 3.5, -4}));
    EXPECT_EQ(count, 2u);
    EXPECT_EQ(cli::parse_configs("[[1,2],[3,4]]", true, 2, count), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(count, 2u);
    EXPECT_TRUE(cli::parse_configs("\n\n\n", false, 0, count).empty());
    EXPECT_EQ(count, 3u);
    EXPECT_THROW(cli::parse_configs("1,2,3\n", false, 2, count), ShapeError);
    EXPECT_THROW(cli::parse_configs("[[1,\"x\"]]", true, 2, count), ParseError);
    EXPECT_THROW(cli::parse_configs("{}", true, 2, count), ParseError);
    EXPECT_THROW(cli::parse_configs("1,inf\n", false, 2, count), NumericError);
}
