#pragma once

#include "connhs/classifier.hpp"
#include "connhs/contrastive.hpp"
#include "connhs/corpus.hpp"
#include "connhs/error.hpp"
#include "connhs/experiment.hpp"
#include "connhs/graph.hpp"
#include "connhs/neural.hpp"
#include "connhs/random.hpp"
#include "connhs/trainer.hpp"
