#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::signal {

/// Centered moving average. Near the edges the window shrinks symmetrically
/// so every output sample stays centered on its input sample.
inline std::vector<double> moving_average(std::span<const double> signal, std::size_t window_len) {
    if (window_len == 0 || window_len % 2 == 0)
        fail(ErrorKind::InvalidArgument, "window_even", "moving-average window must be odd and positive");
    if (window_len > signal.size())
        fail(ErrorKind::InvalidArgument, "window_too_long", "moving-average window longer than signal");

    const std::size_t n = signal.size();
    const std::size_t half = window_len / 2;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double acc = 0.0;
        for (std::size_t j = i - h; j <= i + h; ++j) acc += signal[j];
        out[i] = acc / static_cast<double>(2 * h + 1);
    }
    return out;
}

} // namespace stressmon::signal
