#pragma once

// The eight conditions of the cat/dog click experiment. Cats are class 0 and
// start at the top; dogs are class 1 and start at the bottom.

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "poprank/model.hpp"

namespace poprank {

struct ConditionSpec {
  std::string_view id;
  std::size_t m0;  // cats
  std::size_t m1;  // dogs
  bool dynamic;
};

inline constexpr std::array<ConditionSpec, 8> kConditions{{
    {"D1", 3, 17, true},
    {"D2", 8, 12, true},
    {"D3", 12, 8, true},
    {"D4", 17, 3, true},
    {"S1", 3, 17, false},
    {"S2", 8, 12, false},
    {"S3", 12, 8, false},
    {"S4", 17, 3, false},
}};

struct TypeCounts {
  std::size_t cat = 0;      // type 0
  std::size_t neither = 0;  // type 2
  std::size_t dog = 0;      // type 1

  std::size_t total() const { return cat + neither + dog; }
  bool operator==(const TypeCounts&) const = default;
};

/// Participants per identity type in each condition of the original run,
/// in kConditions order.
inline constexpr std::array<TypeCounts, 8> kObservedTypeCounts{{
    {34, 9, 53},
    {30, 21, 51},
    {24, 11, 64},
    {29, 16, 56},
    {34, 13, 49},
    {30, 19, 52},
    {25, 9, 61},
    {33, 15, 48},
}};

/// 100 users per condition with the pooled type frequencies.
inline constexpr TypeCounts kBalancedTypeCounts{30, 15, 55};

/// Index into kConditions, or empty for an unknown id.
std::optional<std::size_t> condition_index(std::string_view id);

}  // namespace poprank
