#pragma once

#include "tagforge/numgrad/gradcheck.hpp"
#include "tagforge/numgrad/ops.hpp"
#include "tagforge/numgrad/optim.hpp"
#include "tagforge/numgrad/tape.hpp"
#include "tagforge/numgrad/tensor.hpp"
