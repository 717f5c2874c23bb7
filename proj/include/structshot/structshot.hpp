#pragma once

#include "structshot/common.hpp"
#include "structshot/corpus.hpp"
#include "structshot/decode.hpp"
#include "structshot/embed.hpp"
#include "structshot/knn.hpp"
#include "structshot/metrics.hpp"
#include "structshot/pipeline.hpp"
#include "structshot/rng.hpp"
#include "structshot/sampler.hpp"
#include "structshot/transitions.hpp"
