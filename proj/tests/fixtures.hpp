#pragma once

// Hand-transcribed join and projection tables, kept as text so they are
// independent of the arrays in relation.hpp.

#include <array>
#include <string_view>

namespace natlog::fixtures {

/// Column order for every row below.
inline constexpr std::array<std::string_view, 7> kColumns = {"eq", "ent_f", "ent_r", "neg", "alt", "cov", "ind"};

/// Row = left operand, column = right operand.
inline constexpr std::array<std::array<std::string_view, 7>, 7> kJoin = {{
    {"eq", "ent_f", "ent_r", "neg", "alt", "cov", "ind"},
    {"ent_f", "ent_f", "ind", "alt", "alt", "ind", "ind"},
    {"ent_r", "ind", "ent_r", "cov", "ind", "cov", "ind"},
    {"neg", "cov", "alt", "eq", "ent_r", "ent_f", "ind"},
    {"alt", "ind", "alt", "ent_f", "ind", "ent_f", "ind"},
    {"cov", "cov", "ind", "ent_r", "ent_r", "ind", "ind"},
    {"ind", "ind", "ind", "ind", "ind", "ind", "ind"},
}};

struct ProjectionRow {
  std::string_view context;
  std::array<std::string_view, 7> image;
};

inline constexpr std::array<ProjectionRow, 6> kProjection = {{
    {"all.arg1", {"eq", "ent_r", "ent_f", "alt", "ind", "alt", "ind"}},
    {"all.arg2", {"eq", "ent_f", "ent_r", "alt", "alt", "ind", "ind"}},
    {"some.arg1", {"eq", "ent_f", "ent_r", "cov", "ind", "cov", "ind"}},
    {"some.arg2", {"eq", "ent_f", "ent_r", "cov", "ind", "cov", "ind"}},
    {"no.arg1", {"eq", "ent_r", "ent_f", "alt", "ind", "alt", "ind"}},
    {"no.arg2", {"eq", "ent_r", "ent_f", "alt", "ind", "alt", "ind"}},
}};

}  // namespace natlog::fixtures
