#include "crowdcausal/format.hpp"

#include <charconv>
#include <cmath>

namespace crowdcausal {

std::string format_double(double value, int precision) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, precision);
    return std::string(buffer, result.ptr);
}

}  // namespace crowdcausal
