#pragma once

#include "kfsample/core.hpp"
#include "kfsample/dataset_io.hpp"
#include "kfsample/descriptors.hpp"
#include "kfsample/error.hpp"
#include "kfsample/evaluation.hpp"
#include "kfsample/rng.hpp"
#include "kfsample/samplers.hpp"
#include "kfsample/terms.hpp"
#include "kfsample/window_optimizer.hpp"
