#pragma once

#include "spindefect/analysis_fit.hpp"
#include "spindefect/effective_theory.hpp"
#include "spindefect/error.hpp"
#include "spindefect/esr_spectrum.hpp"
#include "spindefect/exact_dynamics.hpp"
#include "spindefect/hamiltonian.hpp"
#include "spindefect/io.hpp"
#include "spindefect/isotopes.hpp"
#include "spindefect/levenberg_marquardt.hpp"
#include "spindefect/spin_core.hpp"
