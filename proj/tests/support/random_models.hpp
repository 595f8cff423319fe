#pragma once

#include <random>

#include "h2coord/coordination.hpp"

namespace testing_support {

using h2coord::AgentModel;
using h2coord::Mat;
using h2coord::Vec;

/// The scalar agent used by the golden tests.
AgentModel scalar_s1();

/// Random agent with n states and m inputs: A Hurwitz with spectral abscissa
/// in [-1, -0.2], Bw square and well conditioned, Dzu with orthonormal
/// columns (so Dzu'Dzu = I) and Cz generic.
AgentModel random_model(std::mt19937_64& rng, int n, int m);

/// Unit weights with every |entry| >= 0.15 before normalization.
Vec random_weights(std::mt19937_64& rng, int nu);

Vec uniform_weights(int nu);

}  // namespace testing_support
