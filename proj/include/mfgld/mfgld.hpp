// Umbrella header.
#pragma once

#include "mfgld/core.hpp"
#include "mfgld/entropy.hpp"
#include "mfgld/iproject.hpp"
#include "mfgld/mfe.hpp"
#include "mfgld/model.hpp"
#include "mfgld/noise.hpp"
#include "mfgld/path_measure.hpp"
#include "mfgld/rates.hpp"
#include "mfgld/simulate.hpp"
#include "mfgld/sinkhorn.hpp"
