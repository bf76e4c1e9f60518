#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cae {

/// Which recursion a value function obeys: cumulative (C), exact-arrival
/// (A), discounted accessibility (D) or goal-reaching Q.
enum class Variant { c, a, d, q };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::c: return "c";
    case Variant::a: return "a";
    case Variant::d: return "d";
    case Variant::q: return "q";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "c" || s == "C") return Variant::c;
  if (s == "a" || s == "A") return Variant::a;
  if (s == "d" || s == "D") return Variant::d;
  if (s == "q" || s == "Q") return Variant::q;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected c, a, d or q)");
}

/// Horizon-indexed variants condition on h; D conditions on gamma; Q on nothing.
inline bool horizon_indexed(Variant v) { return v == Variant::c || v == Variant::a; }

}  // namespace cae
