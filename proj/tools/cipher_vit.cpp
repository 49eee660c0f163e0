// cipher-vit: block-wise image encryption and low-rank ViT fine-tuning.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cvit/config.hpp"
#include "cvit/crypto.hpp"
#include "cvit/errors.hpp"
#include "cvit/experiment.hpp"
#include "cvit/gradcheck.hpp"
#include "cvit/image_io.hpp"

namespace fs = std::filesystem;
using namespace cvit;

namespace {

struct CodecArgs {
  std::string in;
  std::string out;
  std::uint64_t key = 0;
  std::size_t patch_size = 16;
};

void add_codec_options(CLI::App* cmd, CodecArgs& args) {
  cmd->add_option("--in", args.in, "input PPM (P6)")->required();
  cmd->add_option("--out", args.out, "output PPM")->required();
  cmd->add_option("--key", args.key, "64-bit key")->required();
  cmd->add_option("--patch-size", args.patch_size, "block size P")->required();
}

int run_codec(const CodecArgs& args, bool encrypt) {
  const ImageU8 img = read_ppm(args.in);
  const BlockPermutation perm = derive_permutation(EncryptionKey{args.key}, args.patch_size);
  write_ppm(args.out, encrypt ? encrypt_image(img, perm) : decrypt_image(img, perm));
  return 0;
}

std::optional<EncryptionKey> optional_key(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() == 0) return std::nullopt;
  return EncryptionKey{value};
}

void print_count(const char* label, std::size_t value) {
  std::cout << std::left << std::setw(28) << label << value << '\n';
}

void print_millions(const char* label, double value) {
  std::cout << std::left << std::setw(28) << label << std::fixed << std::setprecision(4)
            << value << "M\n";
  std::cout.unsetf(std::ios::fixed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-wise image encryption and low-rank ViT fine-tuning"};
  app.require_subcommand(1);

  CodecArgs enc_args;
  CodecArgs dec_args;
  add_codec_options(app.add_subcommand("encrypt", "encrypt a PPM image block-wise"), enc_args);
  add_codec_options(app.add_subcommand("decrypt", "decrypt a PPM image block-wise"), dec_args);

  auto* derive = app.add_subcommand("derive-perm", "write the block permutation for a key");
  std::uint64_t perm_key = 0;
  std::size_t perm_patch = 16;
  std::string perm_out;
  derive->add_option("--key", perm_key, "64-bit key")->required();
  derive->add_option("--patch-size", perm_patch, "block size P")->required();
  derive->add_option("--out", perm_out,
                     "output file, or a directory that receives perm_<key>_<P>.txt")
      ->required();

  auto* train_cmd = app.add_subcommand("train", "fine-tune under a tuning mode");
  std::string mode_text;
  std::string data_dir;
  std::string config_path;
  std::uint64_t train_key = 0;
  std::size_t limit = 0;
  std::uint64_t seed = 0;
  bool toy = false;
  std::string out_dir = "run";
  std::string runs_csv;
  train_cmd->add_option("--mode", mode_text, "full, melo or ours")
      ->required()
      ->check(CLI::IsMember({"full", "melo", "ours"}));
  train_cmd->add_option("--data", data_dir, "CIFAR-10 binary directory")->required();
  train_cmd->add_option("--config", config_path, "experiment JSON")->required();
  auto* train_key_opt = train_cmd->add_option("--encrypt-key", train_key, "encrypt with this key");
  auto* limit_opt = train_cmd->add_option("--limit", limit, "use the first N training records");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "override train.seed");
  train_cmd->add_flag("--toy", toy, "use the toy ViT (16x16 images, P=4, d=16, L=2, h=2)");
  train_cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  train_cmd->add_option("--runs-csv", runs_csv, "CSV to append to (default <out>/runs.csv)");

  auto* eval_cmd = app.add_subcommand("eval", "test accuracy of a checkpoint");
  std::string ckpt_dir;
  std::string eval_data;
  std::uint64_t eval_key = 0;
  eval_cmd->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_data, "CIFAR-10 binary directory")->required();
  auto* eval_key_opt = eval_cmd->add_option("--encrypt-key", eval_key, "encrypt with this key");

  auto* count_cmd = app.add_subcommand("count-params", "exact parameter accounting");
  std::string count_config;
  std::string count_mode;
  std::size_t rank = 8;
  bool paper_delta = false;
  count_cmd->add_option("--config", count_config, "experiment JSON")->required();
  count_cmd->add_option("--mode", count_mode, "full, melo or ours")
      ->required()
      ->check(CLI::IsMember({"full", "melo", "ours"}));
  count_cmd->add_option("--rank", rank, "adapter rank")->required();
  count_cmd->add_flag("--report-paper-delta", paper_delta,
                      "print the published reference counts and the differences");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::string grad_config;
  double tolerance = 1e-4;
  std::size_t probes = 100;
  grad_cmd->add_option("--config", grad_config, "experiment JSON")->required();
  grad_cmd->add_option("--tolerance", tolerance, "max relative error")->capture_default_str();
  grad_cmd->add_option("--probes", probes, "minimum probed coordinates")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("encrypt")) return run_codec(enc_args, true);
    if (app.got_subcommand("decrypt")) return run_codec(dec_args, false);

    if (derive->parsed()) {
      const EncryptionKey key{perm_key};
      const BlockPermutation perm = derive_permutation(key, perm_patch);
      fs::path target(perm_out);
      if (fs::is_directory(target)) target /= permutation_file_name(key, perm_patch);
      write_permutation_file(target, perm);
      std::cout << "wrote " << target.string() << " (" << perm.block_len() << " entries)\n"
                << "key space: log2 = " << std::setprecision(6) << key_space_bits(perm_patch)
                << " bits\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      TrainRequest req;
      req.config = load_config(config_path);
      if (toy) {
        req.config.vit = ViTConfig::toy(req.config.vit.num_classes);
        req.config.preprocess.target_size = req.config.vit.image_size;
        req.config.preprocess.block_size = req.config.vit.patch_size;
      }
      if (limit_opt->count() > 0) req.config.data.train_limit = limit;
      if (seed_opt->count() > 0) req.config.train.seed = seed;
      req.config.validate();
      req.mode = parse_tuning_mode(mode_text);
      req.data_dir = data_dir;
      req.key = optional_key(train_key_opt, train_key);
      req.out_dir = out_dir;
      req.runs_csv = runs_csv;
      const TrainOutcome outcome = run_train(req);
      const RunReport& r = outcome.report;
      std::cout << "mode " << to_string(r.mode) << ": " << r.steps << " steps, loss "
                << r.initial_loss << " -> " << r.final_loss << ", test accuracy " << r.accuracy
                << "\ntrainable " << r.trainable_params << " / total " << r.total_params
                << (r.encrypted ? ", encrypted (key " + r.key_fingerprint + ")" : "") << '\n'
                << "checkpoint " << outcome.checkpoint_dir.string() << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      EvalRequest req{ckpt_dir, eval_data, optional_key(eval_key_opt, eval_key)};
      std::cout << "accuracy " << run_eval(req) << '\n';
      return 0;
    }

    if (count_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(count_config);
      LoraConfig lora = cfg.lora;
      lora.rank = rank;
      const TuningMode mode = parse_tuning_mode(count_mode);
      const ParamCounts c = count_parameters(cfg.vit, lora, mode);
      std::cout << "mode " << to_string(mode) << ", rank " << rank << ", alpha " << lora.alpha
                << '\n';
      print_count("patch_embed", c.patch_embed);
      print_count("head", c.head);
      print_count("adapters", c.adapters);
      print_count("trainable", c.trainable);
      print_count("total", c.total);
      print_count("closed_form.total", c.closed_form.total);
      print_count("closed_form.adapters", c.closed_form_adapters);
      const bool consistent = c.patch_embed == c.closed_form.patch_embed &&
                              c.head == c.closed_form.head &&
                              c.adapters == c.closed_form_adapters &&
                              c.total == c.closed_form.total + c.closed_form_adapters &&
                              c.trainable == closed_form_trainable(cfg.vit, lora, mode);
      std::cout << "registry_matches_closed_form " << (consistent ? "yes" : "NO") << '\n';
      if (paper_delta) {
        std::cout << "\nreference comparison (closed form, millions)\n";
        for (std::size_t r : {std::size_t{4}, std::size_t{8}}) {
          LoraConfig variant = lora;
          variant.rank = r;
          std::cout << "  rank " << r << '\n';
          print_count("    adapters", closed_form_adapter_params(cfg.vit, variant));
          print_count("    melo trainable", closed_form_trainable(cfg.vit, variant, TuningMode::kMeLo));
          print_count("    ours trainable", closed_form_trainable(cfg.vit, variant, TuningMode::kOurs));
        }
        const double full = static_cast<double>(closed_form_trainable(cfg.vit, lora, TuningMode::kFull)) / 1e6;
        const double melo = static_cast<double>(closed_form_trainable(cfg.vit, lora, TuningMode::kMeLo)) / 1e6;
        const double ours = static_cast<double>(closed_form_trainable(cfg.vit, lora, TuningMode::kOurs)) / 1e6;
        print_millions("  full", full);
        print_millions("  full reference", kReferenceFullMillions);
        print_millions("  full delta", full - kReferenceFullMillions);
        print_millions("  melo", melo);
        print_millions("  melo reference", kReferenceMeLoMillions);
        print_millions("  melo delta", melo - kReferenceMeLoMillions);
        print_millions("  ours", ours);
        print_millions("  ours reference", kReferenceOursMillions);
        print_millions("  ours delta", ours - kReferenceOursMillions);
      }
      return consistent ? 0 : static_cast<int>(ErrorKind::kContract);
    }

    if (grad_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(grad_config);
      GradcheckOptions opts;
      opts.tolerance = tolerance;
      const GradcheckReport report = gradcheck_vit(cfg.vit, cfg.lora, opts, probes, cfg.train.seed);
      std::cout << "probes " << report.probes.size() << ", failures " << report.failures
                << ", max relative error " << std::scientific << report.max_error << '\n';
      for (const auto& p : report.probes) {
        if (p.error > tolerance) {
          std::cout << "  FAIL " << p.name << "[" << p.index << "] analytic " << p.analytic
                    << " numeric " << p.numeric << '\n';
        }
      }
      return report.passed() ? 0 : static_cast<int>(ErrorKind::kContract);
    }
  } catch (const Error& e) {
    std::cerr << "cipher-vit: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "cipher-vit: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
