#include "vegn/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vegn {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const char* source_name(RunConfig::Source s) {
    switch (s) {
        case RunConfig::Source::builtin: return "default";
        case RunConfig::Source::file: return "file";
        case RunConfig::Source::cli: return "flag";
        case RunConfig::Source::env: return "env";
    }
    return "?";
}

}  // namespace

void RunConfig::define(const std::string& key, const std::string& default_value) {
    entries_[key] = Entry{default_value, Source::builtin};
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw std::runtime_error("config: unknown key '" + key + "' in " + path);
        // CLI flags and env overrides beat the file.
        if (it->second.source == Source::builtin) it->second = Entry{value, Source::file};
    }
}

void RunConfig::set_cli(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
    if (it->second.source != Source::env) it->second = Entry{value, Source::cli};
}

void RunConfig::set_env(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
    it->second = Entry{value, Source::env};
}

std::string RunConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw std::out_of_range("config: unknown key '" + key + "'");
    return it->second.value;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not a number: " + v);
    }
}

int RunConfig::get_int(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: " + v);
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not an unsigned integer: " + v);
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
}

RunConfig::Source RunConfig::source(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw std::out_of_range("config: unknown key '" + key + "'");
    return it->second.source;
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    for (const auto& [key, e] : entries_)
        os << key << " = " << e.value << "   # " << source_name(e.source) << "\n";
    return os.str();
}

void RunConfig::write_resolved(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << resolved_text();
}

}  // namespace vegn
