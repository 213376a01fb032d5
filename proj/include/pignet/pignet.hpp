#pragma once

#include "pignet/checkpoint.hpp"
#include "pignet/config.hpp"
#include "pignet/data.hpp"
#include "pignet/errors.hpp"
#include "pignet/evaluator.hpp"
#include "pignet/experiments.hpp"
#include "pignet/gradcheck.hpp"
#include "pignet/inception.hpp"
#include "pignet/layers.hpp"
#include "pignet/metrics.hpp"
#include "pignet/model.hpp"
#include "pignet/ops.hpp"
#include "pignet/optim.hpp"
#include "pignet/tensor.hpp"
#include "pignet/trainer.hpp"
