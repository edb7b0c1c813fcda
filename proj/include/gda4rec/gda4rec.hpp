#pragma once

#include "gda4rec/config.hpp"
#include "gda4rec/dataset.hpp"
#include "gda4rec/diffcore.hpp"
#include "gda4rec/errors.hpp"
#include "gda4rec/experiment.hpp"
#include "gda4rec/graphs.hpp"
#include "gda4rec/losses.hpp"
#include "gda4rec/metrics.hpp"
#include "gda4rec/model.hpp"
#include "gda4rec/sparse.hpp"
#include "gda4rec/trainer.hpp"
