#pragma once

#include "ddb/config.hpp"
#include "ddb/dataset.hpp"
#include "ddb/errors.hpp"
#include "ddb/experiments.hpp"
#include "ddb/factory.hpp"
#include "ddb/io.hpp"
#include "ddb/linop.hpp"
#include "ddb/metrics.hpp"
#include "ddb/oracle.hpp"
#include "ddb/rng.hpp"
#include "ddb/sampler.hpp"
#include "ddb/schedule.hpp"
#include "ddb/tensor.hpp"
#include "ddb/version.hpp"
