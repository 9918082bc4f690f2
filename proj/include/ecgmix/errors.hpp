#pragma once

#include <stdexcept>
#include <string>

namespace ecgmix {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_input : error {
    using error::error;
};

struct shape_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

struct state_error : error {
    using error::error;
};

struct missing_lead : error {
    explicit missing_lead(const std::string& name)
        : error("missing lead: " + name), lead(name) {}
    std::string lead;
};

// All per-sample losses identical; a 2-component mixture cannot be fitted.
struct degenerate_losses : error {
    using error::error;
};

struct degenerate_variance : error {
    using error::error;
};

struct alignment_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace ecgmix
