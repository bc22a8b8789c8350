#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "spectrum.hpp"
#include "spin_model.hpp"
#include "propagation.hpp"
#include "fidelity.hpp"
#include "optimizer.hpp"
#include "experiments.hpp"
#include "io.hpp"
