#pragma once

#include <cstdint>
#include <string>

namespace stirk {

// Shortest round-trip decimal form of a double.
std::string format_double(double value);

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace stirk
