#pragma once

#include <map>
#include <string>
#include <vector>

namespace sft {

// Flat key=value configuration, one entry per line, '#' comments, keys
// namespaced per module (gpha.layers=6, mhca.heads=8, ...).
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// Desk-scale defaults; paper-scale values (C=96, D=256, 128/256 crops,
// six layers) are accepted through the same keys.
struct ModelConfig {
    int base_channels = 8;    // fusion.C
    int width = 32;           // fusion.D
    int mhca_heads = 4;       // mhca.heads
    int mhca_rounds = 4;      // mhca.rounds
    int gpha_heads = 4;       // gpha.heads
    int gpha_layers = 2;      // gpha.layers
    double alpha = 1.0;       // gpha.alpha
    bool use_gaussian = true; // gpha.use_gaussian
    bool cross_mode = false;  // gpha.mode = self | cross
    bool freeze_beta = false; // gpha.freeze_beta
    double dropout = 0.1;     // model.dropout
    // Attention-stack init multiplier. Plain Xavier leaves the random
    // softmax mixing nearly uniform, which starts training at the collapsed
    // fixed point; a modest gain keeps token identities alive.
    double init_gain = 1.5;   // model.init_gain
    int template_size = 32;   // model.template_size
    int search_size = 64;     // model.search_size

    static ModelConfig from(const Config& c);
};

}  // namespace sft
