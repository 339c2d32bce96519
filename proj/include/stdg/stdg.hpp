#pragma once

// Umbrella header for the staggered space-time DG incompressible flow solver.

#include "assembly.hpp"
#include "basis.hpp"
#include "boundary.hpp"
#include "cases.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "krylov.hpp"
#include "linalg.hpp"
#include "mesh.hpp"
#include "operators.hpp"
#include "quadrature.hpp"
#include "timestepper.hpp"
