#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cvit {

enum class LoraTarget { kQuery, kValue };

std::string to_string(LoraTarget target);
LoraTarget parse_lora_target(const std::string& text);

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 4.0;
  std::vector<LoraTarget> targets{LoraTarget::kQuery, LoraTarget::kValue};

  double scaling() const { return alpha / static_cast<double>(rank); }
  bool targets_contain(LoraTarget t) const;
  // Throws ParameterError unless 0 < rank < embed_dim, alpha > 0 and the
  // target list is non-empty and duplicate-free.
  void validate(std::size_t embed_dim) const;
};

}  // namespace cvit
