#ifndef ORDINAL_GRADCHECK_HPP
#define ORDINAL_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ordinal/network.hpp"

namespace ordinal {

// Analytic gradients (double) against central differences evaluated in long
// double over randomly drawn configurations.
struct GradcheckSuite {
    std::string name;
    std::string scope;
    int configurations = 0;
    double worst_relative_error = 0.0;
    double tolerance = 0.0;

    bool passed() const { return worst_relative_error <= tolerance; }
};

// ||a - n||_inf / max(||a||_inf, ||n||_inf), 0 when both vanish.
double gradient_relative_error(const Vec<double>& analytic, const Vec<long double>& numeric);

// "ranking", "keypoint", "volumetric", "reconstruction", "network" or "all".
const std::vector<std::string>& gradcheck_scopes();

std::vector<GradcheckSuite> run_gradcheck(const std::string& scope, int configurations,
                                          std::uint64_t seed);

// Backprop of a given network under a squared-error head, at its current
// parameters, on random inputs. Each configuration checks at most 400
// randomly chosen coordinates.
GradcheckSuite check_network(const Network<double>& net, int configurations, std::uint64_t seed);

} // namespace ordinal

#endif // ORDINAL_GRADCHECK_HPP
