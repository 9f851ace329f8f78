// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "geoprune/bundle.hpp"
#include "geoprune/common.hpp"
#include "geoprune/counter_rng.hpp"
#include "geoprune/geometry.hpp"
#include "geoprune/io.hpp"
#include "geoprune/metrics.hpp"
#include "geoprune/pruner.hpp"
#include "geoprune/scoring.hpp"
#include "geoprune/synthscene.hpp"
