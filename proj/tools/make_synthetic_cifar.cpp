// Writes a CIFAR-10-format binary directory of synthetic images, for
// machines without the real dataset.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cvit/errors.hpp"
#include "cvit/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic CIFAR-10 binary directory"};
  std::string out;
  std::size_t train_count = 5000;
  std::size_t test_count = 1000;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--train", train_count, "training records")->capture_default_str();
  app.add_option("--test", test_count, "test records")->capture_default_str();
  app.add_option("--seed", seed, "generator seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    cvit::write_synthetic_cifar_dir(out, train_count, test_count, seed);
  } catch (const cvit::Error& e) {
    std::cerr << "make_synthetic_cifar: " << cvit::to_string(e.kind()) << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "make_synthetic_cifar: error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote " << train_count << " train / " << test_count << " test records to " << out
            << '\n';
  return 0;
}
