#pragma once

// Umbrella header for the gpq library.

#include "gpq/data.hpp"
#include "gpq/encoder.hpp"
#include "gpq/error.hpp"
#include "gpq/eval.hpp"
#include "gpq/index.hpp"
#include "gpq/io.hpp"
#include "gpq/numerics.hpp"
#include "gpq/objectives.hpp"
#include "gpq/quantizer.hpp"
#include "gpq/trainer.hpp"
