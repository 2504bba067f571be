#pragma once

#include "orthoview/augment.hpp"
#include "orthoview/checkpoint.hpp"
#include "orthoview/config.hpp"
#include "orthoview/dataset.hpp"
#include "orthoview/experiment.hpp"
#include "orthoview/geometry.hpp"
#include "orthoview/metrics.hpp"
#include "orthoview/nn/gradcheck.hpp"
#include "orthoview/nn/layers.hpp"
#include "orthoview/nn/loss.hpp"
#include "orthoview/nn/models.hpp"
#include "orthoview/nn/ops.hpp"
#include "orthoview/nn/optim.hpp"
#include "orthoview/nn/tensor.hpp"
#include "orthoview/projection.hpp"
#include "orthoview/protocol.hpp"
#include "orthoview/random.hpp"
