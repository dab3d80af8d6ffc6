#pragma once

#include "mlpf/config.hpp"
#include "mlpf/data.hpp"
#include "mlpf/estimators.hpp"
#include "mlpf/euler.hpp"
#include "mlpf/experiment.hpp"
#include "mlpf/filters.hpp"
#include "mlpf/kalman.hpp"
#include "mlpf/level.hpp"
#include "mlpf/models.hpp"
#include "mlpf/output.hpp"
#include "mlpf/rates.hpp"
#include "mlpf/reference.hpp"
#include "mlpf/resampling.hpp"
#include "mlpf/rng.hpp"
#include "mlpf/signed_log.hpp"
