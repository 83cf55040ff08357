#pragma once

#include <string>

namespace crowdcausal {

/// Locale-independent `%.10g` rendering; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double value, int precision = 10);

}  // namespace crowdcausal
