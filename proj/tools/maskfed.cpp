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

// maskfed command-line driver.
//
// Exit codes: 0 success, 1 runtime or protocol failure, 2 bad configuration,
// 3 training divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "maskfed/maskfed.hpp"

namespace {

using maskfed::Error;
using maskfed::ErrorCode;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

int ExitCodeFor(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kTrainingDiverged: return kExitDiverged;
    default: return kExitFailure;
  }
}

struct RunFlags {
  std::string config;
  std::optional<std::size_t> rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<double> lambda;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> output_dir;
  std::optional<bool> compression;
  bool quiet = false;
};

int CmdRun(const RunFlags& f) {
  auto cfg = maskfed::LoadExperimentConfig(f.config);
  if (f.rounds) cfg.rounds = *f.rounds;
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.split.seed = *f.seed;
  }
  if (f.threads) {
    if (*f.threads == 0) throw Error(ErrorCode::kConfig, "--threads must be >= 1");
    cfg.threads = *f.threads;
  }
  if (f.lambda) {
    if (*f.lambda < 0) throw Error(ErrorCode::kConfig, "--lambda must be >= 0");
    cfg.training.lambda = *f.lambda;
  }
  if (f.batch_size) {
    if (*f.batch_size == 0) throw Error(ErrorCode::kConfig, "--batch-size must be >= 1");
    cfg.training.batch_size = *f.batch_size;
  }
  if (f.compression) cfg.compression = *f.compression;
  if (const char* env = std::getenv("MASKFED_OUT_DIR"); env != nullptr && *env != '\0') {
    cfg.output_dir = env;
  }
  if (f.output_dir) cfg.output_dir = *f.output_dir;

  const auto result = maskfed::RunExperiment(cfg, [&](const maskfed::RoundSnapshot& s) {
    if (f.quiet) return;
    std::printf("round %3zu  mean val acc %.4f", s.round, s.mean_val_accuracy);
    if (s.global) std::printf("  global acc %.4f", s.global->accuracy);
    std::printf("\n");
    std::fflush(stdout);
  });
  maskfed::WriteExperimentOutputs(result, cfg.output_dir);
  if (!f.quiet) {
    std::printf("\n%s", maskfed::RenderSummary(result).c_str());
    std::printf("outputs written to %s\n", cfg.output_dir.c_str());
  }
  return 0;
}

struct SynthFlags {
  maskfed::SyntheticSpec spec;
  std::string shift = "rotation";
  std::string out_dir = "synth";
};

int CmdGenSynth(SynthFlags f) {
  try {
    f.spec.shift = maskfed::ParseShiftMode(f.shift);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  const auto data = maskfed::GenerateSynthetic(f.spec);
  std::filesystem::create_directories(f.out_dir);
  for (std::size_t k = 0; k < data.clients.size(); ++k) {
    const auto path =
        std::filesystem::path(f.out_dir) / ("client" + std::to_string(k + 1) + ".femb");
    maskfed::WriteBank(path.string(), data.clients[k]);
    std::printf("%s  N=%zu D=%zu C=%zu\n", path.c_str(), data.clients[k].size(),
                data.clients[k].dim, data.clients[k].classes());
  }
  const auto path = std::filesystem::path(f.out_dir) / "global.femb";
  maskfed::WriteBank(path.string(), data.global);
  std::printf("%s  N=%zu D=%zu C=%zu\n", path.c_str(), data.global.size(),
              data.global.dim, data.global.classes());
  return 0;
}

int CmdVerify(double perturb) {
  maskfed::VerifyOptions opts;
  opts.perturb_gradient = perturb;
  const auto results = maskfed::RunVerification(opts);
  std::printf("%s", maskfed::RenderVerification(results).c_str());
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  if (!ok) {
    std::fprintf(stderr, "failed properties:");
    for (const auto& r : results) {
      if (!r.passed) std::fprintf(stderr, " %s", r.name.c_str());
    }
    std::fprintf(stderr, "\n");
  }
  return ok ? 0 : kExitFailure;
}

// Tensor JSON: [{"name": ..., "shape": [...], "values": [...]}, ...]
maskfed::TensorList ReadTensorJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidInput, "cannot open " + path);
  maskfed::TensorList out;
  try {
    const auto root = nlohmann::json::parse(in);
    for (const auto& t : root) {
      maskfed::NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = t.at("shape").get<std::vector<std::uint32_t>>();
      nt.values = t.at("values").get<std::vector<double>>();
      if (nt.values.size() != nt.element_count()) {
        throw Error(ErrorCode::kInvalidInput,
                    "tensor '" + nt.name + "' shape does not match its values");
      }
      out.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  return out;
}

nlohmann::json TensorJson(const maskfed::TensorList& tensors) {
  auto root = nlohmann::json::array();
  for (const auto& t : tensors) {
    root.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  }
  return root;
}

int CmdPack(const std::string& input, const std::string& output,
            std::size_t fam_dim, std::uint64_t seed, bool no_compress) {
  maskfed::TensorList tensors;
  if (fam_dim > 0) {
    maskfed::FamModel fam(fam_dim);
    maskfed::CounterRng rng(seed, maskfed::streams::kFamInit);
    fam.Init(rng);
    tensors = maskfed::SnapshotParameters(fam.Parameters());
  } else {
    if (input.empty()) throw Error(ErrorCode::kInvalidInput, "pack needs an input file or --fam-dim");
    tensors = ReadTensorJson(input);
  }
  const auto packet = maskfed::Pack(tensors, !no_compress);
  maskfed::WritePacketFile(output, packet);
  const std::size_t baseline = maskfed::Float32Bytes(tensors);
  std::printf("%zu tensors, %zu values\n", tensors.size(), maskfed::TotalElements(tensors));
  std::printf("packet %zu bytes, float32 baseline %zu bytes, ratio %.4f\n",
              packet.bytes.size(), baseline,
              baseline == 0 ? 0.0
                            : static_cast<double>(packet.bytes.size()) /
                                  static_cast<double>(baseline));
  return 0;
}

int CmdUnpack(const std::string& input, const std::string& json_out) {
  const auto packet = maskfed::ReadPacketFile(input);
  std::vector<maskfed::WireDtype> dtypes;
  const auto tensors = maskfed::ParsePayload(maskfed::Inflate(packet.bytes), &dtypes);
  std::printf("%-24s %-16s %s\n", "name", "shape", "dtype");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    std::string shape = "[";
    for (std::size_t d = 0; d < tensors[k].shape.size(); ++d) {
      if (d > 0) shape += ",";
      shape += std::to_string(tensors[k].shape[d]);
    }
    shape += "]";
    std::printf("%-24s %-16s %s\n", tensors[k].name.c_str(), shape.c_str(),
                dtypes[k] == maskfed::WireDtype::kFloat16 ? "float16" : "float32");
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw Error(ErrorCode::kInvalidInput, "cannot write " + json_out);
    out << TensorJson(tensors).dump() << "\n";
  }
  return 0;
}

int CmdEval(const std::string& bank_path, const std::string& fam_path, double tau) {
  const auto bank = maskfed::LoadBank(bank_path);
  const auto fam = maskfed::Unpack(maskfed::ReadPacketFile(fam_path));
  maskfed::TrainingConfig cfg;
  cfg.tau = tau;
  const auto m = maskfed::GlobalEvaluate(fam, bank, cfg);
  std::printf("samples   %zu\n", bank.size());
  std::printf("accuracy  %.6f\nmacro_f1  %.6f\nece       %.6f\n", m.accuracy,
              m.macro_f1, m.ece);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated adapter training on frozen embeddings"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run a federated experiment from a JSON config");
  run_cmd->add_option("config", run.config, "Config file")->required();
  run_cmd->add_option("--rounds", run.rounds, "Communication rounds");
  run_cmd->add_option("--seed", run.seed, "Global seed");
  run_cmd->add_option("--threads", run.threads, "Worker threads for client work");
  run_cmd->add_option("--lambda", run.lambda, "Weight of the class-wise KL term");
  run_cmd->add_option("--batch-size", run.batch_size, "Minibatch size");
  run_cmd->add_option("--output-dir,-o", run.output_dir,
                      "Output directory (overrides MASKFED_OUT_DIR and the config)");
  run_cmd->add_option("--compression", run.compression, "float16 + zlib on the wire (true/false)");
  run_cmd->add_flag("--quiet,-q", run.quiet, "Only write files");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write synthetic client and global banks");
  synth_cmd->add_option("--clients,-K", synth.spec.clients, "Number of clients");
  synth_cmd->add_option("--dim,-D", synth.spec.dim, "Feature dimension");
  synth_cmd->add_option("--classes,-C", synth.spec.classes, "Number of classes");
  synth_cmd->add_option("--samples,-n", synth.spec.samples_per_client, "Samples per client");
  synth_cmd->add_option("--shift", synth.shift, "none, rotation, haar or scaling");
  synth_cmd->add_option("--strength", synth.spec.shift_strength, "Shift strength");
  synth_cmd->add_option("--noise", synth.spec.noise, "Per-sample noise scale");
  synth_cmd->add_option("--seed", synth.spec.seed, "Seed");
  synth_cmd->add_option("--out-dir,-o", synth.out_dir, "Output directory");

  double perturb = 0.0;
  auto* verify_cmd = app.add_subcommand("verify", "Run the property suite");
  verify_cmd->add_option("--perturb-gradient", perturb,
                         "Offset added to analytic gradients (negative control)");

  std::string pack_in, pack_out;
  std::size_t fam_dim = 0;
  std::uint64_t pack_seed = 0;
  bool no_compress = false;
  auto* pack_cmd = app.add_subcommand("pack", "Pack tensors into a wire packet");
  pack_cmd->add_option("input", pack_in, "Tensor JSON file");
  pack_cmd->add_option("--out,-o", pack_out, "Packet file")->required();
  pack_cmd->add_option("--fam-dim", fam_dim, "Pack a freshly initialized FAM of this dimension");
  pack_cmd->add_option("--seed", pack_seed, "Seed for --fam-dim");
  pack_cmd->add_flag("--no-compression", no_compress, "Write float32 without deflate");

  std::string unpack_in, unpack_json;
  auto* unpack_cmd = app.add_subcommand("unpack", "Print the tensor table of a packet");
  unpack_cmd->add_option("input", unpack_in, "Packet file")->required();
  unpack_cmd->add_option("--json", unpack_json, "Also write the tensors as JSON");

  std::string eval_bank, eval_fam;
  double eval_tau = 0.01;
  auto* eval_cmd = app.add_subcommand("eval", "FAM-only evaluation of a packet on a bank");
  eval_cmd->add_option("--bank", eval_bank, "Embedding bank (.femb)")->required();
  eval_cmd->add_option("--fam", eval_fam, "FAM packet (.fmc)")->required();
  eval_cmd->add_option("--tau", eval_tau, "Softmax temperature of the similarity logits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return CmdRun(run);
    if (*synth_cmd) return CmdGenSynth(synth);
    if (*verify_cmd) return CmdVerify(perturb);
    if (*pack_cmd) return CmdPack(pack_in, pack_out, fam_dim, pack_seed, no_compress);
    if (*unpack_cmd) return CmdUnpack(unpack_in, unpack_json);
    if (*eval_cmd) return CmdEval(eval_bank, eval_fam, eval_tau);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
