#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lrns {

/// Named space-time scalar field. Time-independent entries are assembled
/// once per run instead of once per step.
struct SpaceTimeFn {
    std::function<double(double, double, double)> fn;  // (x, y, t)
    bool time_dependent = false;
    bool identically_zero = false;
};

inline const std::map<std::string, SpaceTimeFn>& builtin_functions() {
    using std::numbers::pi;
    static const std::map<std::string, SpaceTimeFn> registry = {
        {"zero", {[](double, double, double) { return 0.0; }, false, true}},
        {"one", {[](double, double, double) { return 1.0; }, false, false}},
        {"half", {[](double, double, double) { return 0.5; }, false, false}},
        {"linear_x", {[](double x, double, double) { return x; }, false, false}},
        {"sinpix_sinpiy",
         {[](double x, double y, double) { return std::sin(pi * x) * std::sin(pi * y); }, false,
          false}},
        {"heat_decay_sinpix_sinpiy",
         {[](double x, double y, double t) {
              return std::exp(-pi * t) * std::sin(pi * x) * std::sin(pi * y);
          },
          true, false}},
        {"three_tenths", {[](double, double, double) { return 0.3; }, false, false}},
        {"three_sinpix_sinpiy",
         {[](double x, double y, double) { return 3.0 * std::sin(pi * x) * std::sin(pi * y); },
          false, false}},
        {"three_heat_decay_sinpix_sinpiy",
         {[](double x, double y, double t) {
              return 3.0 * std::exp(-pi * t) * std::sin(pi * x) * std::sin(pi * y);
          },
          true, false}},
        {"six_sinpix_sinpiy",
         {[](double x, double y, double) { return 6.0 * std::sin(pi * x) * std::sin(pi * y); },
          false, false}},
        {"six_exp_decay_sinpix_sinpiy",
         {[](double x, double y, double t) {
              return 6.0 * std::exp(-t) * std::sin(pi * x) * std::sin(pi * y);
          },
          true, false}},
        {"sin2pix_sin2piy",
         {[](double x, double y, double) { return std::sin(2.0 * pi * x) * std::sin(2.0 * pi * y); },
          false, false}},
        {"sin2pix_sinpiy",
         {[](double x, double y, double) { return std::sin(2.0 * pi * x) * std::sin(pi * y); },
          false, false}},
        {"heat_decay_sin2pix_sinpiy",
         {[](double x, double y, double t) {
              return std::exp(-pi * t) * std::sin(2.0 * pi * x) * std::sin(pi * y);
          },
          true, false}},
    };
    return registry;
}

inline const SpaceTimeFn& lookup_function(const std::string& name) {
    const auto& reg = builtin_functions();
    auto it = reg.find(name);
    if (it == reg.end()) {
        std::string known;
        for (const auto& [key, value] : reg) {
            if (!known.empty()) known += ", ";
            known += key;
        }
        throw std::invalid_argument("unknown function '" + name + "'; known names: " + known);
    }
    return it->second;
}

}  // namespace lrns
