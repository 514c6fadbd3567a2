#pragma once

#include "nrr/cit.hpp"
#include "nrr/dataset.hpp"
#include "nrr/errors.hpp"
#include "nrr/experiment.hpp"
#include "nrr/gradcheck.hpp"
#include "nrr/kernel.hpp"
#include "nrr/metrics.hpp"
#include "nrr/models.hpp"
#include "nrr/nca.hpp"
#include "nrr/optim.hpp"
#include "nrr/resolve.hpp"
#include "nrr/rng.hpp"
#include "nrr/tensor.hpp"
