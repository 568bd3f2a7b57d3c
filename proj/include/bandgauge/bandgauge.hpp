#pragma once

#include "classifier.hpp"
#include "datagen.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "freq.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "scoring.hpp"
#include "sfmask.hpp"
#include "stats.hpp"
#include "subjective.hpp"
