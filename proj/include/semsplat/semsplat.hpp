// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "semsplat/core/camera.hpp"
#include "semsplat/core/image.hpp"
#include "semsplat/core/parallel.hpp"
#include "semsplat/core/pointmap.hpp"
#include "semsplat/core/rng.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/fusion.hpp"
#include "semsplat/gaussian.hpp"
#include "semsplat/grad.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/metrics.hpp"
#include "semsplat/optim.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/semantic.hpp"
#include "semsplat/synth.hpp"
