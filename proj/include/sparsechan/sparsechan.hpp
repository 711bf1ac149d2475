#pragma once

#include "sparsechan/core.hpp"
#include "sparsechan/rng.hpp"
#include "sparsechan/linalg.hpp"
#include "sparsechan/pulse.hpp"
#include "sparsechan/multipath.hpp"
#include "sparsechan/ofdm.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/omp.hpp"
#include "sparsechan/bpdn.hpp"
#include "sparsechan/compressibility.hpp"
#include "sparsechan/trial.hpp"
#include "sparsechan/receiver.hpp"
#include "sparsechan/config.hpp"
#include "sparsechan/harness.hpp"
