#pragma once

#include "evinc/bench.hpp"
#include "evinc/events.hpp"
#include "evinc/graph.hpp"
#include "evinc/increment_ops.hpp"
#include "evinc/model_spec.hpp"
#include "evinc/models.hpp"
#include "evinc/sparsify.hpp"
#include "evinc/tensor.hpp"
#include "evinc/weights.hpp"
