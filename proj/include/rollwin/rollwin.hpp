#pragma once

#include "rollwin/autodiff.hpp"
#include "rollwin/binio.hpp"
#include "rollwin/conditioning.hpp"
#include "rollwin/config.hpp"
#include "rollwin/denoiser.hpp"
#include "rollwin/distill.hpp"
#include "rollwin/error.hpp"
#include "rollwin/harness.hpp"
#include "rollwin/kvcache.hpp"
#include "rollwin/metrics.hpp"
#include "rollwin/ops.hpp"
#include "rollwin/rng.hpp"
#include "rollwin/schedule.hpp"
#include "rollwin/settings.hpp"
#include "rollwin/streamer.hpp"
#include "rollwin/tensor.hpp"
