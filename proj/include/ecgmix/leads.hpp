#pragma once

#include <array>
#include <string>
#include <vector>

#include "ecgmix/errors.hpp"

namespace ecgmix {

inline const std::vector<std::string>& standard_12_leads() {
    static const std::vector<std::string> leads = {
        "I", "II", "III", "aVR", "aVL", "aVF",
        "V1", "V2", "V3", "V4", "V5", "V6"};
    return leads;
}

struct lead_combo {
    int name = 12;  // one of {2, 3, 4, 6, 12}
    std::vector<std::string> leads;
};

inline lead_combo combo_for(int n_leads) {
    switch (n_leads) {
        case 2:  return {2, {"I", "II"}};
        case 3:  return {3, {"I", "II", "V2"}};
        case 4:  return {4, {"I", "II", "III", "V2"}};
        case 6:  return {6, {"I", "II", "III", "aVR", "aVL", "aVF"}};
        case 12: return {12, standard_12_leads()};
        default:
            throw config_error("lead combo must be one of 2, 3, 4, 6, 12");
    }
}

inline const std::array<int, 5>& all_combo_names() {
    static const std::array<int, 5> names = {2, 3, 4, 6, 12};
    return names;
}

}  // namespace ecgmix
