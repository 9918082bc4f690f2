#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ecgmix/errors.hpp"
#include "ecgmix/nn/network.hpp"
#include "ecgmix/signal_prep.hpp"
#include "ecgmix/synth.hpp"
#include "ecgmix/train.hpp"

namespace ecgmix {

// Minimal key = value config file with [section] headers and # comments.
class config_file {
  public:
    static config_file parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot read config: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    static config_file parse(const std::string& text) {
        config_file cfg;
        std::istringstream in(text);
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw config_error("config line " + std::to_string(line_no) + ": bad section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw config_error("config line " + std::to_string(line_no) + ": empty key");
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    std::string get_str(const std::string& section, const std::string& key, const std::string& dflt) const {
        auto it = values_.find(section + "." + key);
        return it == values_.end() ? dflt : it->second;
    }

    double get_num(const std::string& section, const std::string& key, double dflt) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return dflt;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw config_error("config key " + section + "." + key + ": not a number: " + it->second);
        }
    }

    int get_int(const std::string& section, const std::string& key, int dflt) const {
        return static_cast<int>(get_num(section, key, dflt));
    }

    std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                  const std::vector<int>& dflt) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return dflt;
        std::vector<int> out;
        std::istringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(std::stoi(tok));
        }
        if (out.empty()) throw config_error("config key " + section + "." + key + ": empty list");
        return out;
    }

  private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views over the config file. Every schedule hyperparameter is a named
// key with its standard value as default.
// ---------------------------------------------------------------------------

inline synthetic_config synthetic_from_config(const config_file& cfg) {
    synthetic_config s;
    s.n_samples = cfg.get_int("synthetic", "n_samples", s.n_samples);
    s.n_labels = cfg.get_int("synthetic", "n_labels", s.n_labels);
    s.n_leads = cfg.get_int("synthetic", "n_leads", s.n_leads);
    s.noise_rate = cfg.get_num("synthetic", "noise_rate", s.noise_rate);
    s.seed = static_cast<std::uint64_t>(cfg.get_num("synthetic", "seed", 1));
    s.duration_s = cfg.get_num("synthetic", "duration_s", s.duration_s);
    s.prevalence = cfg.get_num("synthetic", "prevalence", s.prevalence);
    s.pulse_hz = cfg.get_num("synthetic", "pulse_hz", s.pulse_hz);
    s.waveform_noise = cfg.get_num("synthetic", "waveform_noise", s.waveform_noise);
    return s;
}

inline train_config train_from_config(const config_file& cfg) {
    train_config t;
    t.epochs = cfg.get_int("train", "epochs", 40);
    t.batch = cfg.get_int("train", "batch", 160);
    t.warmup = cfg.get_int("train", "warmup", 2);
    t.em_iters = cfg.get_int("train", "em_iters", 10);
    t.lambda_n = cfg.get_num("train", "lambda_n", 0.5);
    t.mixup_alpha = cfg.get_num("train", "mixup_alpha", 4.0);
    t.threshold = cfg.get_num("train", "threshold", 0.3);
    t.lr = cfg.get_num("train", "lr", 1e-3);
    t.beta1 = cfg.get_num("train", "beta1", 0.9);
    t.beta2 = cfg.get_num("train", "beta2", 0.999);
    t.swa_epochs = cfg.get_int("train", "swa_epochs", 13);
    t.seed = static_cast<std::uint64_t>(cfg.get_num("train", "seed", 1));
    t.eval_batch = cfg.get_int("train", "eval_batch", 64);
    t.swa_refresh_max = cfg.get_int("train", "swa_refresh_max", k_swa_refresh_samples);
    t.checkpoint_every = cfg.get_int("train", "checkpoint_every", 1);
    return t;
}

inline model_config model_from_config(const config_file& cfg) {
    model_config m = model_config::base();
    m.n_labels = cfg.get_int("model", "n_labels", 24);
    m.wide_embed = cfg.get_int("model", "wide_embed", 32);
    m.mlp_hidden = cfg.get_int("model", "mlp_hidden", 256);
    m.channel_multiplier = cfg.get_num("model", "channel_multiplier", 1.0);
    m.use_wide = cfg.get_int("model", "use_wide", 1) != 0;
    return m;
}

inline prep_options prep_from_config(const config_file& cfg) {
    prep_options p;
    p.window_seconds = cfg.get_num("prep", "window_seconds", k_default_window_s);
    return p;
}

}  // namespace ecgmix
