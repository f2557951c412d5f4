#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vegn {

// Plain-text key = value run configuration with provenance tracking.
// Precedence: environment override > command-line flag > config file >
// built-in default. Unknown keys in a file are an error; the resolved
// configuration is echoed into the run directory so any result can be
// reproduced from its artifacts alone.
class RunConfig {
  public:
    enum class Source { builtin, file, cli, env };

    void define(const std::string& key, const std::string& default_value);

    void load_file(const std::string& path);          // unknown key -> error
    void set_cli(const std::string& key, const std::string& value);
    void set_env(const std::string& key, const std::string& value);

    bool known(const std::string& key) const { return entries_.count(key) != 0; }
    std::string get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    Source source(const std::string& key) const;

    // "key = value   # source" lines, keys sorted.
    std::string resolved_text() const;
    void write_resolved(const std::string& path) const;

  private:
    struct Entry {
        std::string value;
        Source source = Source::builtin;
    };
    std::map<std::string, Entry> entries_;
};

}  // namespace vegn
