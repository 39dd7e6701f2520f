#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace happymap {

// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
    InvalidArgument = 1,
    Parse = 2,
    Io = 3,
    Numeric = 4,
    Internal = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Lossless text encoding for doubles (hex-float, plus inf/nan spellings).
std::string encode_real(double v);
double decode_real(const std::string& text);

// Shortest decimal that round-trips; used for CSV cells and report files.
std::string format_real(double v);

// Standard normal quantile (Wichura's PPND16 rational approximation).
double normal_quantile(double p);
double normal_cdf(double x);

std::string format_real_fixed(double v, int digits);

} // namespace happymap
