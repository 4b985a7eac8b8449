#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

// Config-driven experiment pipeline behind the command-line tool:
// simulate -> observe -> estimate/fit -> predict -> report.

namespace stablefield {

// Flat sectioned key-value text format. Lines are `key = value`; `[name]`
// opens a section and keys are addressed as "name.key"; `#` and `;` start
// comments. Parse errors and typed lookups report the config line.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& origin = "<config>");

  bool has(const std::string& key) const;
  // Every getter throws ConfigError (naming key and line) on a missing
  // mandatory key or an unparseable value.
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;
  bool has_section(const std::string& section) const;

  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
  const Entry* find(const std::string& key) const;

  std::map<std::string, Entry> entries_;
  std::string origin_;
};

// Command-line overrides applied on top of the config.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> method;
  std::optional<int> jobs;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunResult {
  std::string out_dir;
  std::vector<std::string> files;  // paths written, in creation order
  std::vector<StageTiming> timings;
};

// Stage subsets used by the subcommands; run_experiment chains everything
// the config asks for and writes summary.json.
RunResult run_simulate(const ConfigFile& config, const RunOverrides& overrides);
RunResult run_variogram(const ConfigFile& config, const RunOverrides& overrides);
RunResult run_fit(const ConfigFile& config, const RunOverrides& overrides);
RunResult run_predict(const ConfigFile& config, const RunOverrides& overrides);
RunResult run_experiment(const ConfigFile& config, const RunOverrides& overrides);

}  // namespace stablefield
