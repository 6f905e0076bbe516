#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace stressmon {

/// The five EMA answers, in increasing order of stress.
enum class StressLevel : int { NotAtAll = 0, ALittleBit = 1, Some = 2, ALot = 3, Extremely = 4 };

inline constexpr std::array<std::string_view, 5> kStressLevelNames = {"not at all", "a little bit", "some", "a lot",
                                                                      "extremely"};

enum class Activity : int { Sitting = 0, Standing, Walking, Running, Lying, Other };

inline constexpr std::array<std::string_view, 6> kActivityNames = {"sitting", "standing", "walking",
                                                                   "running", "lying", "other"};

inline std::string_view to_string(StressLevel s) { return kStressLevelNames[static_cast<std::size_t>(s)]; }
inline std::string_view to_string(Activity a) { return kActivityNames[static_cast<std::size_t>(a)]; }

inline std::optional<StressLevel> stress_level_from_int(long long v) {
    if (v < 0 || v > 4) return std::nullopt;
    return static_cast<StressLevel>(v);
}

inline std::optional<StressLevel> stress_level_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kStressLevelNames.size(); ++i)
        if (kStressLevelNames[i] == s) return static_cast<StressLevel>(i);
    return std::nullopt;
}

inline std::optional<Activity> activity_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kActivityNames.size(); ++i)
        if (kActivityNames[i] == s) return static_cast<Activity>(i);
    return std::nullopt;
}

inline std::optional<Activity> activity_from_int(long long v) {
    if (v < 0 || v >= static_cast<long long>(kActivityNames.size())) return std::nullopt;
    return static_cast<Activity>(v);
}

} // namespace stressmon
