#pragma once

#include "dgen/error.hpp"
#include "dgen/gat.hpp"
#include "dgen/gradcheck.hpp"
#include "dgen/graph.hpp"
#include "dgen/matrix.hpp"
#include "dgen/metrics.hpp"
#include "dgen/ncpool.hpp"
#include "dgen/objectives.hpp"
#include "dgen/pipeline.hpp"
#include "dgen/tensor.hpp"
