#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "urb/data_io.hpp"
#include "urb/evaluation.hpp"
#include "urb/training.hpp"

namespace urb {

// Flat key=value configuration. '#' starts a comment, blank lines are
// skipped, keys must come from the known-key list (typos are hard errors),
// later assignments override earlier ones.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin);

  // Validates the key and overrides any earlier value (used by --set flags).
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string* find(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  // Comma-separated values; an empty string yields an empty list.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

const std::vector<std::string>& known_config_keys();

// Assembly helpers shared by the CLI commands.
Dataset dataset_from_config(const Config& cfg, const std::string& role);  // "train" or "test"
ModelSpec model_spec_from_config(const Config& cfg, const std::array<std::size_t, 3>& input);
// Ball/step/iteration spec for one norm from the attack.<norm>.* namespace.
PerturbationSpec perturbation_from_config(const Config& cfg, NormKind k);
TrainConfig train_config_from_config(const Config& cfg);
AttackSuite suite_from_config(const Config& cfg);
// Suite entry for one attack id (used by the attack command); accepts "msd"
// in addition to the suite ids.
std::optional<AttackSuiteEntry> suite_entry_from_config(const Config& cfg, const std::string& id);

}  // namespace urb
