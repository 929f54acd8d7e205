#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <string_view>

#include "elastic/errors.hpp"

namespace elastic {

// Time-reversal symmetry class of the limiting ensemble.
enum class SymmetryClass { orthogonal = 1, unitary = 2 };

/// Chaoticity parameter kappa of the Poisson -> GUE crossover.
///
/// kappa = 0 is the regular (Poisson) end, the distinguished infinite value is
/// the fully chaotic (GUE) end. Infinity is a separate state, never a large
/// sentinel number.
class Chaoticity {
 public:
  static Chaoticity finite(double kappa) {
    if (!std::isfinite(kappa) || kappa < 0.0)
      throw DomainError("chaoticity must be finite and >= 0, got " + std::to_string(kappa));
    return Chaoticity(kappa, false);
  }
  static constexpr Chaoticity infinite() noexcept { return Chaoticity(0.0, true); }
  static constexpr Chaoticity regular() noexcept { return Chaoticity(0.0, false); }

  // Accepts a decimal number or "inf" / "infinity" (case-insensitive).
  static Chaoticity parse(std::string_view text) {
    std::string lower;
    for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "inf" || lower == "infinity" || lower == "+inf") return infinite();
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(lower, &used);
    } catch (const std::exception&) {
      throw DomainError("cannot parse chaoticity '" + std::string(text) + "'");
    }
    if (used != lower.size()) throw DomainError("cannot parse chaoticity '" + std::string(text) + "'");
    if (std::isinf(v) && v > 0) return infinite();
    return finite(v);
  }

  constexpr bool is_infinite() const noexcept { return infinite_; }
  constexpr bool is_zero() const noexcept { return !infinite_ && kappa_ == 0.0; }

  double value() const {
    if (infinite_) throw DomainError("chaoticity is infinite");
    return kappa_;
  }

  // +inf for the chaotic end; handy for ordering and printing only.
  double as_double() const noexcept { return infinite_ ? std::numeric_limits<double>::infinity() : kappa_; }

  std::string to_string() const {
    if (infinite_) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", kappa_);
    return buf;
  }

  friend constexpr bool operator==(const Chaoticity&, const Chaoticity&) = default;

 private:
  constexpr Chaoticity(double k, bool inf) noexcept : kappa_(k), infinite_(inf) {}
  double kappa_;
  bool infinite_;
};

/// Openness eta = t_H / t_W = M T.
class Openness {
 public:
  explicit Openness(double eta) : eta_(eta) {
    if (!std::isfinite(eta) || eta < 0.0)
      throw DomainError("openness must be finite and >= 0, got " + std::to_string(eta));
  }
  double value() const noexcept { return eta_; }

 private:
  double eta_;
};

/// Time in units of the Heisenberg time.
class ScaledTime {
 public:
  explicit ScaledTime(double s) : s_(s) {
    if (!std::isfinite(s) || s < 0.0)
      throw DomainError("scaled time must be finite and >= 0, got " + std::to_string(s));
  }
  double value() const noexcept { return s_; }

 private:
  double s_;
};

}  // namespace elastic
