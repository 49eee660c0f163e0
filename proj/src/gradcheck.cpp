#include "cvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"
#include "cvit/ops.hpp"
#include "cvit/random.hpp"
#include "cvit/trainer.hpp"

namespace cvit {

double gradient_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                const NamedTensors& params,
                                const std::vector<std::pair<std::size_t, std::size_t>>& coords,
                                const GradcheckOptions& options) {
  for (const auto& [name, tensor] : params) {
    Tensor<double> handle = tensor;
    handle.clear_grad();
  }
  clear_tape<double>();
  Tensor<double> loss = loss_fn();
  backward(loss);

  GradcheckReport report;
  for (const auto& [param_index, element] : coords) {
    const auto& [name, tensor] = params.at(param_index);
    Tensor<double> handle = tensor;
    if (element >= handle.numel()) throw IndexError("gradcheck coordinate out of range");
    Probe probe;
    probe.name = name;
    probe.index = element;
    probe.analytic = handle.has_grad() ? handle.grad()[element] : 0.0;

    auto values = handle.mutable_data();
    const double original = values[element];
    double plus = 0.0;
    double minus = 0.0;
    {
      NoGradGuard guard;
      values[element] = original + options.step;
      plus = loss_fn().item();
      values[element] = original - options.step;
      minus = loss_fn().item();
    }
    values[element] = original;
    probe.numeric = (plus - minus) / (2.0 * options.step);
    probe.error = gradient_error(probe.analytic, probe.numeric, options.floor);
    report.max_error = std::max(report.max_error, probe.error);
    if (!(probe.error <= options.tolerance)) ++report.failures;
    report.probes.push_back(std::move(probe));
  }
  return report;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_coords(const NamedTensors& params,
                                                               std::size_t per_param,
                                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t n = params[p].second.numel();
    if (n <= per_param) {
      for (std::size_t i = 0; i < n; ++i) coords.emplace_back(p, i);
      continue;
    }
    std::vector<std::size_t> picked;
    while (picked.size() < per_param) {
      const std::size_t i = rng.below(n);
      if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
    }
    for (std::size_t i : picked) coords.emplace_back(p, i);
  }
  return coords;
}

namespace {

enum class Group { kAdapterA, kAdapterB, kPatchEmbed, kHead, kOther };

Group group_of(const std::string& name) {
  if (name.rfind(kLoraPrefix, 0) == 0) return name.ends_with(".a") ? Group::kAdapterA : Group::kAdapterB;
  if (name.rfind("patch_embed.", 0) == 0) return Group::kPatchEmbed;
  if (name.rfind("head.", 0) == 0) return Group::kHead;
  return Group::kOther;
}

}  // namespace

GradcheckReport gradcheck_vit(const ViTConfig& config, const LoraConfig& lora,
                              const GradcheckOptions& options, std::size_t min_probes,
                              std::uint64_t seed) {
  ViTModel<double> model(config, seed);
  inject(model, lora, seed + 1);
  Rng rng(seed + 2);
  // Zero B factors would zero every gradient reaching A.
  for (const auto& adapter : adapters(model)) {
    Tensor<double> b = adapter.b;
    for (double& v : b.mutable_data()) v = 0.02 * rng.normal();
  }
  // Random biases and LayerNorm affines so that no gradient is trivially
  // structured.
  for (const auto& [name, tensor] : model.registry().entries()) {
    if (name.ends_with("bias") || name.rfind("blocks.", 0) == 0 && name.find("norm") != std::string::npos) {
      Tensor<double> t = tensor;
      for (double& v : t.mutable_data()) v += 0.1 * rng.normal();
    }
  }
  apply_policy(model, TuningMode::kFull);

  FloatImage<double> image(config.image_size, config.image_size);
  for (double& v : image.values) v = rng.uniform(-1.0, 1.0);
  const std::size_t label = rng.below(config.num_classes);

  NamedTensors params(model.registry().entries().begin(), model.registry().entries().end());

  // Spread probes over the five groups; each group receives an equal share,
  // spread evenly over its tensors.
  constexpr std::size_t kGroups = 5;
  const std::size_t per_group = (min_probes + kGroups - 1) / kGroups;
  std::vector<std::vector<std::size_t>> members(kGroups);
  for (std::size_t i = 0; i < params.size(); ++i) {
    members[static_cast<std::size_t>(group_of(params[i].first))].push_back(i);
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (const auto& group : members) {
    if (group.empty()) continue;
    std::size_t taken = 0;
    for (std::size_t round = 0; taken < per_group; ++round) {
      bool progressed = false;
      for (std::size_t idx : group) {
        if (taken == per_group) break;
        const std::size_t n = params[idx].second.numel();
        if (round >= n) continue;
        std::size_t element = rng.below(n);
        // Avoid duplicates within a tensor by linear probing.
        while (std::find(coords.begin(), coords.end(), std::make_pair(idx, element)) !=
               coords.end()) {
          element = (element + 1) % n;
        }
        coords.emplace_back(idx, element);
        ++taken;
        progressed = true;
      }
      if (!progressed) break;
    }
  }

  auto loss_fn = [&] { return cross_entropy(forward(model, image), label); };
  return check_gradients(loss_fn, params, coords, options);
}

}  // namespace cvit
