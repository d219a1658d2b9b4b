#pragma once

#include "dspack/common.hpp"
#include "dspack/profile.hpp"
#include "dspack/packing.hpp"
#include "dspack/simulate.hpp"
#include "dspack/verify.hpp"
#include "dspack/optimizer.hpp"
#include "dspack/network.hpp"
#include "dspack/regression.hpp"
#include "dspack/allocator.hpp"
#include "dspack/commands.hpp"
