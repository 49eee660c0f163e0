// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "cvit/config.hpp"
#include "cvit/crypto.hpp"
#include "cvit/data.hpp"
#include "cvit/experiment.hpp"
#include "cvit/gradcheck.hpp"
#include "cvit/lora.hpp"
#include "cvit/synthetic.hpp"
#include "cvit/trainer.hpp"
#include "support/oracles.hpp"

using namespace cvit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string run_command(const std::string& cmd, int& status) {
  std::string out;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (pipe == nullptr) {
    status = -1;
    return out;
  }
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) out += buf.data();
  status = pclose(pipe);
  return out;
}

// Value printed after `label` on its own line of CLI output.
std::size_t field(const std::string& text, const std::string& label) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::string key;
    std::size_t value = 0;
    if (ls >> key && key == label && ls >> value) return value;
  }
  return static_cast<std::size_t>(-1);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cvit_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kCli = CVIT_CLI_PATH;
const fs::path kConfigs = CVIT_CONFIG_DIR;

// Round half-up to two decimals in millions, as a published table would.
double millions_2dp(std::size_t count) {
  return std::floor(static_cast<double>(count) / 1e4 + 0.5) / 100.0;
}

Outcome parameter_counts() {
  const std::string config = (kConfigs / "vit_b16.json").string();
  int s8 = 0, s4 = 0;
  const std::string r8 = run_command(kCli + " count-params --config " + config +
                                         " --mode ours --rank 8 --report-paper-delta", s8);
  const std::string r4 = run_command(kCli + " count-params --config " + config +
                                         " --mode melo --rank 4", s4);
  std::ostringstream d;
  bool ok = s8 == 0 && s4 == 0;
  auto expect = [&](const char* what, std::size_t got, std::size_t want) {
    if (got != want) {
      ok = false;
      d << what << " " << got << " != " << want << "; ";
    }
  };
  expect("adapters(r=8)", field(r8, "adapters"), 294912);
  expect("adapters(r=4)", field(r4, "adapters"), 147456);
  expect("patch_embed", field(r8, "patch_embed"), 590592);
  expect("head", field(r8, "head"), 7690);
  expect("closed_form.adapters(r=8)", field(r8, "closed_form.adapters"), 294912);
  expect("closed_form.adapters(r=4)", field(r4, "closed_form.adapters"), 147456);
  if (r8.find("registry_matches_closed_form yes") == std::string::npos ||
      r4.find("registry_matches_closed_form yes") == std::string::npos) {
    ok = false;
    d << "live registry disagrees with closed form; ";
  }
  if (r8.find("ours delta") == std::string::npos || r8.find("full delta") == std::string::npos) {
    ok = false;
    d << "deltas not printed; ";
  }
  const std::size_t melo4 = field(r4, "trainable");
  const double shown = millions_2dp(melo4);
  d << "ours r8 trainable " << field(r8, "trainable") << ", melo r4 trainable " << melo4
    << " -> " << shown << "M vs reference " << kReferenceMeLoMillions << "M";
  if (std::abs(shown - kReferenceMeLoMillions) > 1e-9) {
    ok = false;
    d << " (does not round to the reference; only the adapter-only count "
      << field(r4, "adapters") << " does)";
  }
  return {ok, d.str()};
}

Outcome encryption_round_trip() {
  Rng rng(2024);
  std::size_t checked = 0;
  for (int i = 0; i < 100; ++i) {
    const BlockPermutation perm = derive_permutation(EncryptionKey{rng.next_u64()}, 16);
    const ImageU8 img = oracle::random_image(rng, 224, 224);
    const ImageU8 enc = encrypt_image(img, perm);
    if (decrypt_image(enc, perm) != img) return {false, "round trip broke at image " + std::to_string(i)};
    for (std::size_t by = 0; by < 14; ++by) {
      for (std::size_t bx = 0; bx < 14; ++bx) {
        if (oracle::block_histogram(img, 16, by, bx) != oracle::block_histogram(enc, 16, by, bx)) {
          return {false, "block multiset changed at image " + std::to_string(i)};
        }
        ++checked;
      }
    }
  }
  return {true, "100 images, " + std::to_string(checked) + " blocks"};
}

Outcome golden_permutation() {
  const fs::path dir = scratch("golden");
  int status = 0;
  const std::string out =
      run_command(kCli + " derive-perm --key 42 --patch-size 2 --out " + dir.string(), status);
  if (status != 0) return {false, out};
  const fs::path written = dir / "perm_42_2.txt";
  const fs::path golden = fs::path(CVIT_TEST_DATA_DIR) / "golden_perm_42_2.txt";
  const bool same = slurp(written) == slurp(golden) &&
                    oracle::read_golden(golden.string()) == oracle::kGoldenKey42P2;
  return {same, same ? "12 entries byte-identical" : "derive-perm output differs from golden file"};
}

Outcome compensation() {
  Rng rng(77);
  double worst = 0.0;
  const std::array<double, 3> mean{0.5, 0.5, 0.5};
  for (int trial = 0; trial < 20; ++trial) {
    const BlockPermutation perm = derive_permutation(EncryptionKey{rng.next_u64()}, 4);
    const ImageU8 raw = oracle::random_image(rng, 16, 16);
    const auto plain = normalize<double>(raw, mean, mean);
    const auto enc = normalize<double>(encrypt_image(raw, perm), mean, mean);
    Tensor<double> w(Shape{16, 48});
    Tensor<double> b(Shape{16});
    for (double& v : w.mutable_data()) v = rng.normal();
    for (double& v : b.mutable_data()) v = rng.normal();
    Tensor<double> w_enc(Shape{16, 48});
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t k = 0; k < 48; ++k) w_enc.mutable_data()[r * 48 + k] = w.at(r, perm.forward[k]);
    }
    const auto want = oracle::values_of(patch_embed(plain, w, b, 4));
    const auto got = oracle::values_of(patch_embed(enc, w_enc, b, 4));
    worst = std::max(worst, oracle::max_relative_error(got, want, 1e-12));
  }
  std::ostringstream d;
  d << "20 pairs, max relative error " << worst;
  return {worst <= 1e-5, d.str()};
}

Outcome lora_identity() {
  Rng rng(55);
  ViTModel<double> model(ViTConfig::toy(10), 9);
  std::vector<FloatImage<double>> inputs;
  std::vector<oracle::Matrix> before;
  for (int i = 0; i < 10; ++i) {
    inputs.push_back(oracle::random_float_image<double>(rng, 16));
    before.push_back(oracle::values_of(forward(model, inputs.back())));
  }
  const LoraConfig lora{8, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}};
  inject(model, lora, 10);
  for (int i = 0; i < 10; ++i) {
    if (oracle::values_of(forward(model, inputs[i])) != before[i]) {
      return {false, "logits changed after injection on input " + std::to_string(i)};
    }
  }
  for (const auto& a : adapters(model)) {
    Tensor<double> bt = a.b;
    for (double& v : bt.mutable_data()) v = 0.05 * rng.normal();
  }
  const ViTModel<double> merged = merge_adapters(model);
  double worst = 0.0;
  for (const auto& img : inputs) {
    worst = std::max(worst, oracle::max_relative_error(oracle::values_of(forward(merged, img)),
                                                       oracle::values_of(forward(model, img)), 1e-9));
  }
  std::ostringstream d;
  d << "10 inputs bit-identical at init; merged vs adapted max relative error " << worst;
  return {worst <= 1e-5, d.str()};
}

Outcome gradients() {
  GradcheckOptions opts;
  opts.step = 1e-4;
  opts.tolerance = 1e-4;
  const LoraConfig lora{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}};
  const GradcheckReport report = gradcheck_vit(ViTConfig::toy(10), lora, opts, 100, 3);
  std::set<std::string> groups;
  for (const auto& p : report.probes) {
    if (p.name.rfind(kLoraPrefix, 0) == 0) groups.insert(p.name.ends_with(".a") ? "A" : "B");
    if (p.name.rfind("patch_embed.", 0) == 0) groups.insert("patch_embed");
    if (p.name.rfind("head.", 0) == 0) groups.insert("head");
  }
  std::ostringstream d;
  d << report.probes.size() << " probes over " << groups.size() << "/4 required groups, "
    << report.failures << " failures, max relative error " << report.max_error;
  return {report.passed() && report.probes.size() >= 100 && groups.size() == 4, d.str()};
}

Outcome freeze_soundness() {
  const auto records = select_classes(synthetic_cifar(320, 5), {0, 1}, 64);
  PreprocessSpec spec;
  spec.target_size = 16;
  spec.block_size = 4;
  spec.key = EncryptionKey{13};
  const Dataset<float> data = prepare<float>(records, spec);
  std::ostringstream d;
  bool ok = true;
  for (TuningMode mode : {TuningMode::kFull, TuningMode::kMeLo, TuningMode::kOurs}) {
    ViTModel<float> model(ViTConfig::toy(2), 4);
    if (mode != TuningMode::kFull) inject(model, LoraConfig{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}}, 5);
    const TuningPolicy policy = apply_policy(model, mode);
    const auto before = oracle::fingerprints(model);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 100;
    cfg.max_steps = 50;
    cfg.batch_size = 8;
    const RunReport r = train(model, policy, data, cfg);
    const auto after = oracle::fingerprints(model);
    std::set<std::string> changed;
    std::set<std::string> expected;
    for (const auto& [name, hash] : before) {
      if (after.at(name) != hash) changed.insert(name);
      if (policy.matches(name)) expected.insert(name);
    }
    const bool same = changed == expected && r.steps == 50;
    ok = ok && same;
    d << to_string(mode) << " " << changed.size() << "/" << before.size() << (same ? "" : " MISMATCH")
      << "; ";
  }
  return {ok, d.str()};
}

Outcome trend() {
  const fs::path data = scratch("trend_data");
  write_synthetic_cifar_dir(data, 2500, 1000, 1);
  const ExperimentConfig base = load_config(kConfigs / "desk_trend.json");
  const EncryptionKey key{20240917};
  int ours_wins = 0;
  bool drops = true;
  std::ostringstream d;
  d.precision(3);
  for (std::uint64_t seed : {0, 1, 2}) {
    std::map<TuningMode, RunReport> reports;
    for (TuningMode mode : {TuningMode::kMeLo, TuningMode::kOurs}) {
      TrainRequest req;
      req.config = base;
      req.config.train.seed = seed;
      req.mode = mode;
      req.data_dir = data;
      req.key = key;
      req.out_dir = scratch("trend_" + to_string(mode) + std::to_string(seed));
      reports[mode] = run_train(req).report;
    }
    const RunReport& ours = reports[TuningMode::kOurs];
    const RunReport& melo = reports[TuningMode::kMeLo];
    const double drop = 1.0 - ours.final_loss / ours.initial_loss;
    if (ours.accuracy >= melo.accuracy) ++ours_wins;
    if (drop < 0.5 || ours.steps != 200) drops = false;
    d << "seed " << seed << ": ours " << ours.accuracy << " melo " << melo.accuracy
      << " ours loss drop " << drop << "; ";
  }
  d << "ours >= melo in " << ours_wins << "/3";
  return {ours_wins >= 2 && drops, d.str()};
}

Outcome determinism() {
  const fs::path data = scratch("det_data");
  write_synthetic_cifar_dir(data, 1000, 200, 3);
  ::setenv("CIPHER_VIT_THREADS", "0", 1);
  std::array<fs::path, 2> outs{scratch("det_a"), scratch("det_b")};
  for (const auto& out : outs) {
    int status = 0;
    const std::string log = run_command(kCli + " train --mode ours --data " + data.string() +
                                            " --config " + (kConfigs / "toy.json").string() +
                                            " --encrypt-key 99 --seed 4 --out " + out.string(),
                                        status);
    if (status != 0) return {false, log};
  }
  for (const char* file : {"checkpoint/weights.bin", "checkpoint/manifest.json",
                           "checkpoint/config.json", "runs.csv"}) {
    if (slurp(outs[0] / file) != slurp(outs[1] / file)) return {false, std::string(file) + " differs"};
  }
  auto report = [](const fs::path& p) {
    auto doc = nlohmann::json::parse(slurp(p / "report.json"));
    doc.erase("created_at");
    return doc;
  };
  if (report(outs[0]) != report(outs[1])) return {false, "report.json differs outside created_at"};
  return {true, "checkpoint, runs.csv and report.json identical (" +
                    std::to_string(fs::file_size(outs[0] / "checkpoint/weights.bin")) +
                    " weight bytes)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "parameter counts", 1.0, parameter_counts},
      {2, "encryption round trip", 10.0, encryption_round_trip},
      {3, "golden permutation", 0.0, golden_permutation},
      {4, "patch-embedding compensation", 0.0, compensation},
      {5, "adapter identity at init", 0.0, lora_identity},
      {6, "gradient check", 60.0, gradients},
      {7, "freeze soundness", 0.0, freeze_soundness},
      {8, "desk-scale trend", 600.0, trend},
      {9, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail += " [over " + std::to_string(c.limit_seconds) + " s limit]";
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d %-30s %s (%.2f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
