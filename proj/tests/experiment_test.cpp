// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "maskfed/experiment.hpp"

namespace maskfed {
namespace {

using nlohmann::json;

std::string ReadText(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json SmallConfig() {
  return json::parse(R"({
    "data": {"synthetic": {"clients": 3, "dim": 8, "classes": 3,
                           "samples_per_client": 60}},
    "rounds": 3,
    "training": {"hidden": 16}
  })");
}

void ExpectConfigError(const json& j, const std::string& needle) {
  try {
    ParseExperimentConfig(j);
    FAIL() << needle;
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, DefaultsFollowTrainingRecipe) {
  const auto cfg = ParseExperimentConfig(json::parse(R"({"data": {"synthetic": {}}})"));
  EXPECT_EQ(cfg.rounds, 30u);
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.training.batch_size, 32u);
  EXPECT_EQ(cfg.training.lambda, 0.04);
  EXPECT_EQ(cfg.training.temperature, 2.0);
  EXPECT_EQ(cfg.training.tau, 0.01);
  EXPECT_EQ(cfg.training.gamma, 0.97);
  EXPECT_EQ(cfg.training.optimizer.weight_decay, 0.02);
  EXPECT_EQ(cfg.training.optimizer.beta1, 0.99);
  EXPECT_EQ(cfg.training.optimizer.beta2, 0.98);
  EXPECT_TRUE(cfg.compression);
  ASSERT_TRUE(cfg.data.synthetic.has_value());
  EXPECT_EQ(cfg.data.synthetic->clients, 3u);
}

TEST(Config, ErrorsNameTheKey) {
  auto j = SmallConfig();
  j["training"]["lamda"] = 0.1;
  ExpectConfigError(j, "training.lamda");
  j = SmallConfig();
  j["rounds"] = "many";
  ExpectConfigError(j, "'rounds'");
  j = SmallConfig();
  j["training"]["tau"] = 0.0;
  ExpectConfigError(j, "training.tau");
  j = SmallConfig();
  j["data"]["synthetic"]["shift"] = "spin";
  ExpectConfigError(j, "data.synthetic.shift");
  ExpectConfigError(json::parse(R"({"data": {"clients": ["/no/such/file.femb"]}})"),
                    "data.clients[0]");
  ExpectConfigError(json::parse(R"({"rounds": 2})"), "'data'");
  ExpectConfigError(json::parse(R"({"data": {"synthetic": {}, "clients": []}})"), "exactly one");
}

TEST(Config, RelativeBankPathsResolveAgainstConfigDir) {
  const auto dir = std::filesystem::path(MASKFED_TEST_DATA_DIR);
  const auto cfg = ParseExperimentConfig(
      json::parse(R"({"data": {"clients": ["two_class.femb"], "global": "two_class.femb"}})"), dir);
  EXPECT_EQ(cfg.data.client_banks.front(), (dir / "two_class.femb").string());
  EXPECT_EQ(cfg.data.global_bank, (dir / "two_class.femb").string());
}

TEST(Experiment, ZeroRoundsEmitsInitializationOnly) {
  auto j = SmallConfig();
  j["rounds"] = 0;
  const auto result = RunExperiment(ParseExperimentConfig(j));
  ASSERT_EQ(result.rounds.size(), 1u);
  EXPECT_EQ(result.best_round, 0u);
  const std::string csv = RenderMetricsCsv(result);
  EXPECT_EQ(csv.find("\n1,"), std::string::npos);
  EXPECT_EQ(CommThrough(result, 0).up, 0u);
}

TEST(Experiment, AvgIsMeanOfClientsAndGlobal) {
  const auto result = RunExperiment(ParseExperimentConfig(SmallConfig()));
  std::istringstream csv(RenderSummaryCsv(result));
  std::string header, line;
  std::getline(csv, header);
  std::getline(csv, line);
  ASSERT_EQ(line.rfind("accuracy,", 0), 0u);
  std::vector<double> cells;
  std::stringstream ss(line.substr(9));
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(std::stod(cell));
  ASSERT_EQ(cells.size(), 5u);  // three clients, global, AVG
  const double mean = (cells[0] + cells[1] + cells[2] + cells[3]) / 4.0;
  EXPECT_NEAR(cells[4], mean, 1e-6);
  EXPECT_NEAR(AverageAccuracy(result.rounds[result.best_round]),
              (result.rounds[result.best_round].clients[0].test.accuracy +
               result.rounds[result.best_round].clients[1].test.accuracy +
               result.rounds[result.best_round].clients[2].test.accuracy +
               result.rounds[result.best_round].global->accuracy) / 4.0,
              1e-15);
}

TEST(Experiment, OutputsAreThreadInvariant) {
  auto cfg = ParseExperimentConfig(SmallConfig());
  const auto a = RunExperiment(cfg);
  cfg.threads = 3;
  const auto b = RunExperiment(cfg);
  EXPECT_EQ(RenderRoundLog(a), RenderRoundLog(b));
  EXPECT_EQ(RenderMetricsCsv(a), RenderMetricsCsv(b));
  EXPECT_EQ(RenderSummaryCsv(a), RenderSummaryCsv(b));
  EXPECT_EQ(RenderSummary(a), RenderSummary(b));
}

TEST(Experiment, FileBasedDataWithDirichletSplit) {
  const auto dir = std::filesystem::path(testing::TempDir()) / "dirichlet_exp";
  std::filesystem::create_directories(dir);
  SyntheticSpec spec;
  spec.clients = 1;
  spec.dim = 8;
  spec.classes = 3;
  spec.samples_per_client = 300;
  const auto data = GenerateSynthetic(spec);
  WriteBank((dir / "pool.femb").string(), data.clients[0]);
  WriteBank((dir / "global.femb").string(), data.global);
  const auto cfg = ParseExperimentConfig(json::parse(R"({
    "data": {"dirichlet": {"bank": "pool.femb", "clients": 3, "alpha": 5.0},
             "global": "global.femb"},
    "rounds": 2, "training": {"hidden": 16}})"), dir);
  const auto result = RunExperiment(cfg);
  EXPECT_EQ(result.rounds.back().clients.size(), 3u);
  EXPECT_TRUE(result.rounds.back().global.has_value());
  WriteExperimentOutputs(result, dir / "out");
  for (const char* f : {"rounds.ndjson", "metrics.csv", "summary.csv", "summary.txt",
                        "timing.csv", "global_fam.fmc"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
  }
  EXPECT_EQ(Unpack(ReadPacketFile((dir / "out" / "global_fam.fmc").string())),
            Unpack(Pack(result.final_global_fam)));
}

TEST(Experiment, BundledConfigReproducesGoldenMetrics) {
  const auto cfg = LoadExperimentConfig(std::string(MASKFED_CONFIG_DIR) + "/synthetic3.json");
  const auto golden_path = std::filesystem::path(MASKFED_TEST_DATA_DIR) / "synthetic3_metrics.csv";
  ASSERT_TRUE(std::filesystem::exists(golden_path));
  const auto result = RunExperiment(cfg);
  EXPECT_EQ(RenderMetricsCsv(result), ReadText(golden_path));
}

}  // namespace
}  // namespace maskfed
