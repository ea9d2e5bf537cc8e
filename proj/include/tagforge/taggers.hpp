#pragma once

#include "tagforge/taggers/batch.hpp"
#include "tagforge/taggers/bertlike.hpp"
#include "tagforge/taggers/bilstm.hpp"
#include "tagforge/taggers/layers.hpp"
#include "tagforge/taggers/train.hpp"
#include "tagforge/taggers/transformer.hpp"
