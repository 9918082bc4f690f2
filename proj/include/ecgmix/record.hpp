#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecgmix/errors.hpp"

namespace ecgmix {

enum class gender : std::uint8_t { male, female, unknown };

inline std::string gender_to_string(gender g) {
    switch (g) {
        case gender::male: return "male";
        case gender::female: return "female";
        default: return "unknown";
    }
}

inline gender gender_from_string(const std::string& s) {
    if (s == "male" || s == "M" || s == "m") return gender::male;
    if (s == "female" || s == "F" || s == "f") return gender::female;
    return gender::unknown;
}

// One multichannel recording with metadata and a multi-hot label vector.
// `labels` are the training labels (possibly noisy); `labels_clean` is kept
// by the synthetic generator for evaluation and is empty for real data.
struct record {
    std::string id;
    std::vector<std::vector<float>> signal;  // [lead][sample]
    double sample_rate = 0.0;
    std::vector<std::string> lead_names;
    std::optional<double> age;
    gender sex = gender::unknown;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> labels_clean;

    int lead_index(const std::string& name) const {
        for (std::size_t i = 0; i < lead_names.size(); ++i)
            if (lead_names[i] == name) return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        if (sample_rate <= 0.0) throw invalid_input("record " + id + ": sample_rate must be > 0");
        if (signal.size() != lead_names.size())
            throw invalid_input("record " + id + ": lead count mismatch");
        for (std::size_t i = 1; i < signal.size(); ++i)
            if (signal[i].size() != signal[0].size())
                throw invalid_input("record " + id + ": leads have unequal lengths");
        for (auto y : labels)
            if (y > 1) throw invalid_input("record " + id + ": labels must be 0/1");
    }
};

// Fixed-length hand-crafted feature vector: age, gender one-hot, RR stats.
struct wide_features {
    double age_norm = 0.5;
    double gender_onehot[3] = {0.0, 0.0, 0.0};
    // mean RR (s), std RR (s), min RR (s), max RR (s), heart rate (bpm)
    double rr_stats[5] = {0.0, 0.0, 0.0, 0.0, 0.0};

    static constexpr int dim = 9;

    std::vector<double> flatten() const {
        return {age_norm,
                gender_onehot[0], gender_onehot[1], gender_onehot[2],
                rr_stats[0], rr_stats[1], rr_stats[2], rr_stats[3], rr_stats[4]};
    }
};

// A record after preprocessing: fixed-shape model input plus wide features.
struct prepared_record {
    std::string id;
    std::vector<std::vector<float>> channels;  // [combo lead][window sample]
    wide_features wide;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> labels_clean;
};

struct dataset {
    std::vector<record> records;
    int n_labels = 0;
};

struct prepared_dataset {
    std::vector<prepared_record> records;
    int n_labels = 0;
    int n_channels = 0;
    int window = 0;  // samples per channel
    std::vector<std::string> lead_names;
};

}  // namespace ecgmix
