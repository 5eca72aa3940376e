#include "sft/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sft {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config error: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config error: line " + std::to_string(lineno) +
                                     " is not key=value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error("config error: empty key at line " + std::to_string(lineno));
        }
        c.kv_[key] = value;
    }
    return c;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config error: key " + key + " is not an integer");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config error: key " + key + " is not a number");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::runtime_error("config error: key " + key + " is not a boolean");
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream is(it->second);
    std::string item;
    while (std::getline(is, item, ',')) {
        try {
            out.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw std::runtime_error("config error: key " + key + " is not a number list");
        }
    }
    if (out.empty()) throw std::runtime_error("config error: key " + key + " is empty");
    return out;
}

ModelConfig ModelConfig::from(const Config& c) {
    ModelConfig m;
    m.base_channels = c.get_int("fusion.C", m.base_channels);
    m.width = c.get_int("fusion.D", m.width);
    m.mhca_heads = c.get_int("mhca.heads", m.mhca_heads);
    m.mhca_rounds = c.get_int("mhca.rounds", m.mhca_rounds);
    m.gpha_heads = c.get_int("gpha.heads", m.gpha_heads);
    m.gpha_layers = c.get_int("gpha.layers", m.gpha_layers);
    m.alpha = c.get_double("gpha.alpha", m.alpha);
    m.use_gaussian = c.get_bool("gpha.use_gaussian", m.use_gaussian);
    std::string mode = c.get_string("gpha.mode", m.cross_mode ? "cross" : "self");
    if (mode != "self" && mode != "cross") {
        throw std::runtime_error("config error: gpha.mode must be self or cross");
    }
    m.cross_mode = mode == "cross";
    m.freeze_beta = c.get_bool("gpha.freeze_beta", m.freeze_beta);
    m.dropout = c.get_double("model.dropout", m.dropout);
    m.init_gain = c.get_double("model.init_gain", m.init_gain);
    m.template_size = c.get_int("model.template_size", m.template_size);
    m.search_size = c.get_int("model.search_size", m.search_size);
    if (m.width % 4 != 0) throw std::runtime_error("config error: fusion.D must be divisible by 4");
    if (m.width % m.mhca_heads != 0 || m.width % m.gpha_heads != 0) {
        throw std::runtime_error("config error: head counts must divide fusion.D");
    }
    if (m.template_size % 16 != 0 || m.search_size % 16 != 0) {
        throw std::runtime_error("config error: crop sizes must be divisible by 16");
    }
    return m;
}

}  // namespace sft
