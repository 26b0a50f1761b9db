#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ropnet {

RunConfig::RunConfig() {
    values_ = {
        // data generation
        {"n_points", "1024"},
        {"keep_ratio", "0.7"},
        {"angle_max_deg", "45"},
        {"trans_max", "0.5"},
        {"noise_sigma", "0.01"},
        {"noise_clip", "0.5"},
        {"overlap_d", "0.05"},
        {"noise", "on"},
        {"single_sample", "off"},
        {"flip_augment", "off"},
        {"normals_k", "16"},
        {"shape_candidates", "4096"},
        {"categories", ""},
        {"seed", "0"},
        // network architecture
        {"cp", "192"},
        {"c0", "64"},
        {"blocks", "4"},
        {"gn_groups", "8"},
        {"ppf_k", "64"},
        {"ppf_radius", "0.3"},
        {"enc_widths", "64,64,64,128,512"},
        {"init_widths", "512,512,256,7"},
        {"ov_widths", "512,512,256,2"},
        {"mu_widths", "64,96,192"},
        {"ffnn_widths", "192,192"},
        // TFMR selection
        {"n1", "448"},
        {"m1", "0"},
        {"prob_train", "0.6"},
        {"prob_test", "0.4"},
        {"k_train", "3"},
        {"k_test", "1"},
        {"train_iters", "1"},
        {"test_iters", "2"},
        {"fmr_weighting", "softmax"},
        // losses
        {"alpha", "1"},
        {"beta", "0.1"},
        {"lambda", "1"},
        {"l1_mode", "mean"},
        // optimizer and schedule
        {"lr", "0.0001"},
        {"adam_beta1", "0.9"},
        {"adam_beta2", "0.999"},
        {"adam_eps", "1e-8"},
        {"sched_t0", "40"},
        {"sched_factor", "2"},
        {"sched_unit", "epoch"},
        {"svd_jitter", "1e-8"},
        // training loop
        {"batch", "8"},
        {"epochs", "50"},
        {"steps", "0"},
        {"workers", "1"},
        {"ckpt_every", "0"},
        // evaluation
        {"score_cut", "0.5"},
    };
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(Status::Usage, "unknown config key: " + key);
    return it->second;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(Status::Usage, "unknown config key: " + key);
    it->second = value;
}

long RunConfig::get_long(const std::string& key) const {
    try {
        return std::stol(get(key));
    } catch (const std::logic_error&) {
        throw Error(Status::Usage, "config key " + key + " is not an integer");
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::logic_error&) {
        throw Error(Status::Usage, "config key " + key + " is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw Error(Status::Usage, "config key " + key + " is not a boolean: " + v);
}

std::vector<long> RunConfig::get_longs(const std::string& key) const {
    std::vector<long> out;
    for (const std::string& tok : get_list(key)) {
        try {
            out.push_back(std::stol(tok));
        } catch (const std::logic_error&) {
            throw Error(Status::Usage, "config key " + key + " has non-integer entry");
        }
    }
    return out;
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(Status::Data, "cannot open config file: " + path);
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Status::Data, path + ":" + std::to_string(lineno) +
                                          ": expected key=value");
        std::string key = line.substr(first, eq - first);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t' ||
                                  value.back() == '\r'))
            value.pop_back();
        size_t vfirst = value.find_first_not_of(" \t");
        if (vfirst != std::string::npos) value = value.substr(vfirst);
        else value.clear();
        set(key, value);
    }
}

void RunConfig::save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error(Status::Data, "cannot write config file: " + path);
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    if (!os) throw Error(Status::Data, "failed writing config file: " + path);
}

void RunConfig::apply_env_overrides() {
    if (const char* seed = std::getenv("ROPNET_SEED")) set("seed", seed);
}

}  // namespace ropnet
