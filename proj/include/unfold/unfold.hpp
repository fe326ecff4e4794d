#pragma once

#include "unfold/core.hpp"
#include "unfold/diagnostics.hpp"
#include "unfold/grm_sampler.hpp"
#include "unfold/io.hpp"
#include "unfold/opum_sampler.hpp"
#include "unfold/random.hpp"
#include "unfold/response.hpp"
#include "unfold/simulate.hpp"
