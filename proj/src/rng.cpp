#include "metabr/rng.hpp"

#include <cmath>

namespace metabr {

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
}

}  // namespace metabr
