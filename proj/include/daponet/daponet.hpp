#pragma once

// Convenience umbrella: pulls in the whole library.

#include "checks.hpp"
#include "detect.hpp"
#include "grad.hpp"
#include "image.hpp"
#include "model.hpp"
#include "weights.hpp"
