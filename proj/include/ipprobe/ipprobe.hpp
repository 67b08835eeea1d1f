#pragma once

#include "ipprobe/backends.hpp"
#include "ipprobe/config.hpp"
#include "ipprobe/core.hpp"
#include "ipprobe/error.hpp"
#include "ipprobe/io.hpp"
#include "ipprobe/metrics.hpp"
#include "ipprobe/pipeline.hpp"
#include "ipprobe/remote.hpp"
#include "ipprobe/rng.hpp"
#include "ipprobe/sampling.hpp"
#include "ipprobe/serialization.hpp"
#include "ipprobe/stats.hpp"
#include "ipprobe/verdict.hpp"
