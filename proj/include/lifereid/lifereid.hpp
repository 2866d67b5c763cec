#pragma once

#include "lifereid/clustering.hpp"
#include "lifereid/config.hpp"
#include "lifereid/core_numeric.hpp"
#include "lifereid/dataset_dir.hpp"
#include "lifereid/encoder.hpp"
#include "lifereid/error.hpp"
#include "lifereid/evaluation.hpp"
#include "lifereid/gradient_check.hpp"
#include "lifereid/losses.hpp"
#include "lifereid/memory.hpp"
#include "lifereid/parallel.hpp"
#include "lifereid/pipeline.hpp"
#include "lifereid/rng.hpp"
#include "lifereid/run_dir.hpp"
#include "lifereid/serialize.hpp"
#include "lifereid/synth_data.hpp"
