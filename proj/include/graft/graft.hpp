#pragma once

// Umbrella header.
#include "graft/error.hpp"
#include "graft/tensor.hpp"
#include "graft/model.hpp"
#include "graft/data.hpp"
#include "graft/train.hpp"
#include "graft/criteria.hpp"
#include "graft/grafting.hpp"
#include "graft/diagnostics.hpp"
#include "graft/coordinator.hpp"
#include "graft/io.hpp"
#include "graft/commands.hpp"
