#pragma once

#include <numbers>

namespace backaction::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// CODATA 2018.
inline constexpr double hbar = 1.054571817e-34;          // J s (exact via h)
inline constexpr double k_boltzmann = 1.380649e-23;      // J/K (exact)
inline constexpr double speed_of_light = 299792458.0;    // m/s (exact)
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

// 87Rb atomic mass, 86.909180527 u (AME 2016, as tabulated in Steck's Rb-87 D-line data).
inline constexpr double rb87_mass = 86.909180527 * atomic_mass_unit;

}  // namespace backaction::constants
