#pragma once

#include "taste/error.hpp"
#include "taste/prompt.hpp"
#include "taste/corpus.hpp"
#include "taste/dataset.hpp"
#include "taste/backend.hpp"
#include "taste/scorer.hpp"
#include "taste/pipeline.hpp"
#include "taste/metrics.hpp"
#include "taste/cli.hpp"
