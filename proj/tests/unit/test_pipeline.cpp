#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tpm/error.hpp"
#include "tpm/pipeline.hpp"
#include "tpm/synthetic.hpp"

namespace tpm {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string config_error(const ordered_json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "configuration accepted: " << j.dump();
  return {};
}

TEST(RunConfig, DefaultsAndJsonRoundTrip) {
  const RunConfig defaults = RunConfig::from_json(ordered_json::object());
  EXPECT_EQ(defaults.method, Method::kTpm);
  EXPECT_EQ(defaults.num_leaves, 32u);
  EXPECT_EQ(defaults.num_groups, 32u);
  EXPECT_EQ(defaults.train.weights, (LossWeights{1.0, 1.0, 1.0}));
  EXPECT_EQ(defaults.wlr.negative_quantile, 0.25);

  const auto j = ordered_json::parse(R"({
    "method": "tpm-deconfounded", "seed": 7,
    "net": {"hidden_dims": [16, 8], "activation": "tanh"},
    "train": {"epochs": 3, "alpha2": 0.5, "optimizer": "sgd"},
    "tree": {"kind": "linear", "num_leaves": 8, "leaf_values": "empirical_mean"},
    "deconfound": {"num_groups": 4, "conditioning": "separate", "predict_mode": "do"}
  })");
  const RunConfig c = RunConfig::from_json(j);
  EXPECT_EQ(c.method, Method::kTpmDeconfounded);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.net.hidden_dims, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.net.activation, Activation::kTanh);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.weights.alpha2, 0.5);
  EXPECT_EQ(c.train.optimizer.kind, OptimizerKind::kSgd);
  EXPECT_EQ(c.tree_kind, TreeKind::kLinear);
  EXPECT_TRUE(c.empirical_leaf_means);
  EXPECT_EQ(c.conditioning, Conditioning::kSeparateNets);
  EXPECT_EQ(c.predict_mode, PredictMode::kDo);

  const RunConfig again = RunConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(RunConfig, EveryProblemIsReportedAtOnce) {
  const auto msg = config_error(ordered_json::parse(R"({
    "method": "gbdt",
    "net": {"hidden_dims": "wide"},
    "train": {"batch_size": 0, "learning_rate": -1},
    "tree": {"num_leaves": 1},
    "colour": "blue"
  })"));
  EXPECT_NE(msg.find("method"), std::string::npos) << msg;
  EXPECT_NE(msg.find("net.hidden_dims"), std::string::npos) << msg;
  EXPECT_NE(msg.find("train.batch_size"), std::string::npos) << msg;
  EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("tree.num_leaves"), std::string::npos) << msg;
  EXPECT_NE(msg.find("colour: unknown key"), std::string::npos) << msg;
  EXPECT_NE(msg.find("6 problems"), std::string::npos) << msg;
}

TEST(RunConfig, DurationRequirement) {
  RunConfig c;
  for (Method m : {Method::kTpmDeconfounded, Method::kD2q}) {
    c.method = m;
    EXPECT_TRUE(c.needs_duration());
  }
  c.method = Method::kOr;
  c.num_groups = 1;
  EXPECT_FALSE(c.needs_duration());
  c.num_groups = 4;
  EXPECT_TRUE(c.needs_duration());
  c.method = Method::kTpm;
  EXPECT_FALSE(c.needs_duration());
  EXPECT_FALSE(c.schema().require_duration);
}

class PipelineFiles : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::path(TPM_TEST_TMPDIR) / "pipeline";
    fs::create_directories(dir_);
    SyntheticSpec spec;
    spec.rows = 600;
    spec.seed = 5;
    spec.confounding_x = 0.5;
    spec.confounding_t = 0.5;
    const auto data = generate_synthetic(spec).data;
    write_csv(dir_ / "train.csv", data);
    Dataset no_duration = data;
    no_duration.duration.reset();
    write_csv(dir_ / "no_duration.csv", no_duration);
  }
  static fs::path dir_;
};
fs::path PipelineFiles::dir_;

TEST_F(PipelineFiles, MissingDurationColumnIsOneConfigError) {
  RunConfig c;
  c.method = Method::kD2q;
  c.train_path = (dir_ / "no_duration.csv").string();
  c.train.batch_size = 0;
  try {
    check_training_inputs(c);
    FAIL() << "expected a configuration error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(msg.find("2 problems"), std::string::npos) << msg;
    EXPECT_NE(msg.find("duration column 'duration' required by method d2q"),
              std::string::npos)
        << msg;
    EXPECT_NE(msg.find("train.batch_size"), std::string::npos) << msg;
  }
  c.train.batch_size = 32;
  c.train_path = (dir_ / "nowhere.csv").string();
  EXPECT_THROW(check_training_inputs(c), Error);
  c.train_path = (dir_ / "train.csv").string();
  EXPECT_NO_THROW(check_training_inputs(c));
}

RunConfig small_run(Method method) {
  RunConfig c;
  c.method = method;
  c.seed = 1;
  c.net.hidden_dims = {8};
  c.train.epochs = 2;
  c.train.batch_size = 64;
  c.num_leaves = 8;
  c.num_groups = 3;
  return c;
}

TEST_F(PipelineFiles, EvaluateWrapsMetricFunctions) {
  const auto data = load_csv(dir_ / "train.csv", CsvSchema{});
  const auto file = train_model(small_run(Method::kTpm), data);
  const auto preds = predict_all(file.model, data);
  std::vector<double> values;
  double std_sum = 0.0;
  for (const auto& p : preds) {
    values.push_back(p.value);
    std_sum += *p.std_dev;
  }
  const Metrics m = evaluate(file.model, data);
  EXPECT_EQ(m.n, data.size());
  EXPECT_EQ(m.mae, mae(values, data.watch_time));
  EXPECT_EQ(m.xauc, xauc(values, data.watch_time));
  EXPECT_NEAR(*m.mean_std, std_sum / static_cast<double>(data.size()), 1e-12);
  const auto j = ordered_json::parse(to_json_line(m));
  EXPECT_EQ(j.at("n").get<std::size_t>(), data.size());
  EXPECT_EQ(j.at("mae").get<double>(), m.mae);
}

TEST_F(PipelineFiles, PredictNeedsDurationForConditionedMethods) {
  const auto data = load_csv(dir_ / "train.csv", CsvSchema{});
  auto no_duration = data;
  no_duration.duration.reset();
  const auto d2q = train_model(small_run(Method::kD2q), data);
  EXPECT_THROW(predict_all(d2q.model, no_duration), Error);
  EXPECT_FALSE(predict_all(d2q.model, data)[0].std_dev.has_value());

  RunConfig c = small_run(Method::kTpmDeconfounded);
  c.predict_mode = PredictMode::kDo;
  const auto do_model = train_model(c, data);
  EXPECT_NO_THROW(predict_all(do_model.model, no_duration));
}

TEST_F(PipelineFiles, SingleGroupDeconfoundedMatchesPlain) {
  const auto data = load_csv(dir_ / "train.csv", CsvSchema{});
  RunConfig c = small_run(Method::kTpmDeconfounded);
  c.num_groups = 1;
  const auto deconf = evaluate(train_model(c, data).model, data);
  const auto plain = evaluate(train_model(small_run(Method::kTpm), data).model, data);
  EXPECT_EQ(deconf, plain);
}

TEST_F(PipelineFiles, SweepRowsMatchTrainThenEvaluate) {
  const auto data = load_csv(dir_ / "train.csv", CsvSchema{});
  const RunConfig c = small_run(Method::kTpm);
  const auto single = sweep(c, SweepAxis::kNumLeaves, {4}, data, data);
  ASSERT_EQ(single.size(), 1u);
  RunConfig four = c;
  four.num_leaves = 4;
  EXPECT_EQ(single[0].metrics, evaluate(train_model(four, data).model, data));
  EXPECT_EQ(single[0].value, 4.0);

  const auto grid = sweep(c, SweepAxis::kAlpha2, {0.1, 0.5, 1.0}, data, data);
  ASSERT_EQ(grid.size(), 3u);
  EXPECT_EQ(grid[1].value, 0.5);
  const auto row = ordered_json::parse(to_json_line(grid[1]));
  EXPECT_EQ(row.at("axis").get<std::string>(), "alpha2");

  EXPECT_THROW(sweep(c, SweepAxis::kNumLeaves, {2.5}, data, data), Error);
  EXPECT_THROW(sweep(c, SweepAxis::kNumLeaves, {}, data, data), Error);
  EXPECT_THROW(sweep_axis_from_string("depth"), Error);
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

TEST(DumpTree, BalancedFourLeaves) {
  const auto tree = build_balanced_tree(OrdinalScale({0.0, 1.0, 2.0, 3.0, 4.0}));
  const std::string dump = dump_tree(tree);
  EXPECT_EQ(count_lines(dump), 7u);
  EXPECT_NE(dump.find("n0: [0, 4] head 0 -> n1, n2\n"), std::string::npos) << dump;
  EXPECT_NE(dump.find("[2, 3] leaf 2 midpoint 2.5 value 2.5\n"), std::string::npos) << dump;
}

TEST(DumpTree, ListsEachNodeInterval) {
  // Root over [0, 1] splits off [0, 0.2]; the rest splits at 0.6 and each
  // half splits once more.
  const OrdinalScale scale({0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  using Children = std::pair<std::size_t, std::size_t>;
  std::vector<TreeNode> nodes(9);
  nodes[0] = {0, 5, Children{1, 2}, 0, std::nullopt};
  nodes[1] = {0, 1, std::nullopt, std::nullopt, scale.midpoint(0)};
  nodes[2] = {1, 5, Children{3, 4}, 1, std::nullopt};
  nodes[3] = {1, 3, Children{5, 6}, 2, std::nullopt};
  nodes[4] = {3, 5, Children{7, 8}, 3, std::nullopt};
  nodes[5] = {1, 2, std::nullopt, std::nullopt, scale.midpoint(1)};
  nodes[6] = {2, 3, std::nullopt, std::nullopt, scale.midpoint(2)};
  nodes[7] = {3, 4, std::nullopt, std::nullopt, scale.midpoint(3)};
  nodes[8] = {4, 5, std::nullopt, std::nullopt, scale.midpoint(4)};
  const DecompositionTree tree(scale, TreeKind::kBalanced, nodes, 0);
  const std::string dump = dump_tree(tree);
  EXPECT_EQ(count_lines(dump), 9u);
  EXPECT_NE(dump.find("n3: [0.2, 0.6] head 2 -> n5, n6"), std::string::npos) << dump;
  EXPECT_NE(dump.find("n6: [0.4, 0.6] leaf 2 midpoint 0.5"), std::string::npos) << dump;
}

TEST_F(PipelineFiles, InspectTreeByMethod) {
  const auto data = load_csv(dir_ / "train.csv", CsvSchema{});
  RunConfig c = small_run(Method::kTpm);
  c.num_leaves = 4;
  const std::string plain = inspect_tree(train_model(c, data).model);
  EXPECT_EQ(plain.rfind("balanced tree, 4 leaves, 3 heads\n", 0), 0u) << plain;
  EXPECT_EQ(count_lines(plain), 8u);

  c.method = Method::kTpmDeconfounded;
  const std::string grouped = inspect_tree(train_model(c, data).model);
  EXPECT_NE(grouped.find("group 2"), std::string::npos) << grouped;

  c.method = Method::kWlr;
  EXPECT_THROW(inspect_tree(train_model(c, data).model), Error);
}

// ---- command-line tool -----------------------------------------------------

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const fs::path dir = fs::path(TPM_TEST_TMPDIR) / "cli";
  fs::create_directories(dir);
  const fs::path capture = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + TPM_CLI_PATH + "\" " + args + " > \"" +
                          capture.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::path(TPM_TEST_TMPDIR) / "cli";
    fs::create_directories(dir_);
    const auto gen = run_cli("gen-synthetic --rows 500 --seed 3 --out " +
                             (dir_ / "data.csv").string());
    ASSERT_EQ(gen.exit_code, 0) << gen.out;
    std::ofstream(dir_ / "config.json") << R"({
      "net": {"hidden_dims": [8]},
      "train": {"epochs": 2, "batch_size": 64},
      "tree": {"num_leaves": 8},
      "deconfound": {"num_groups": 1}
    })";
  }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string train_args(const std::string& method, const std::string& model) {
    return "train --config " + path("config.json") + " --data " + path("data.csv") +
           " --method " + method + " --model " + path(model);
  }
  static fs::path dir_;
};
fs::path Cli::dir_;

TEST_F(Cli, TrainEvaluatePredictInspect) {
  const auto train = run_cli(train_args("tpm", "tpm.model"));
  ASSERT_EQ(train.exit_code, 0) << train.out;
  EXPECT_EQ(count_lines(train.out), 2u) << train.out;  // one log line per epoch
  EXPECT_NO_THROW(ordered_json::parse(train.out.substr(0, train.out.find('\n'))));

  const auto eval = run_cli("evaluate --model " + path("tpm.model") + " --data " +
                            path("data.csv"));
  ASSERT_EQ(eval.exit_code, 0) << eval.out;
  const auto metrics = ordered_json::parse(eval.out);
  EXPECT_EQ(metrics.at("n").get<int>(), 500);

  const auto pred = run_cli("predict --model " + path("tpm.model") + " --data " +
                            path("data.csv"));
  ASSERT_EQ(pred.exit_code, 0) << pred.out;
  EXPECT_EQ(count_lines(pred.out), 500u);
  const auto first = ordered_json::parse(pred.out.substr(0, pred.out.find('\n')));
  EXPECT_EQ(first.at("row").get<int>(), 0);
  EXPECT_TRUE(first.at("std").is_number());

  const auto inspect = run_cli("inspect-tree --model " + path("tpm.model"));
  ASSERT_EQ(inspect.exit_code, 0) << inspect.out;
  EXPECT_EQ(count_lines(inspect.out), 16u) << inspect.out;
}

TEST_F(Cli, SingleGroupDeconfoundedReportsIdenticalMetrics) {
  ASSERT_EQ(run_cli(train_args("tpm", "a.model")).exit_code, 0);
  ASSERT_EQ(run_cli(train_args("tpm-deconfounded", "b.model")).exit_code, 0);
  const auto a = run_cli("evaluate --model " + path("a.model") + " --data " + path("data.csv"));
  const auto b = run_cli("evaluate --model " + path("b.model") + " --data " + path("data.csv"));
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, SweepPrintsOneRowPerValue) {
  const auto r = run_cli("sweep --config " + path("config.json") + " --data " +
                         path("data.csv") + " --axis num_leaves --values 4,8");
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_EQ(count_lines(r.out), 2u) << r.out;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("train --bogus-flag").exit_code, 2);

  std::ofstream(path("bad.json")) << R"({"train": {"epochs": "many"}})";
  const auto bad_config = run_cli("train --config " + path("bad.json") + " --data " +
                                  path("data.csv") + " --model " + path("x.model"));
  EXPECT_EQ(bad_config.exit_code, 2) << bad_config.out;
  EXPECT_NE(bad_config.out.find("train.epochs"), std::string::npos) << bad_config.out;

  std::ofstream(path("broken.csv")) << "f0,watch_time\n1,oops\n";
  const auto bad_data = run_cli("evaluate --model " + path("a.model") + " --data " +
                                path("broken.csv"));
  EXPECT_EQ(bad_data.exit_code, 3) << bad_data.out;

  std::ofstream(path("garbage.model")) << "definitely not a model";
  const auto bad_model = run_cli("evaluate --model " + path("garbage.model") + " --data " +
                                 path("data.csv"));
  EXPECT_EQ(bad_model.exit_code, 5) << bad_model.out;

  std::ofstream(path("diverge.json")) << R"({
    "net": {"hidden_dims": [8]},
    "train": {"epochs": 3, "learning_rate": 1e308, "optimizer": "sgd"},
    "tree": {"num_leaves": 8}
  })";
  const auto diverged = run_cli("train --config " + path("diverge.json") + " --data " +
                                path("data.csv") + " --model " + path("d.model"));
  EXPECT_EQ(diverged.exit_code, 4) << diverged.out;
}

}  // namespace
}  // namespace tpm
