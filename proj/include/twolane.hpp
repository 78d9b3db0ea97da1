/**
 * Copyright 2026, The twolane Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"); you may not
 * use this file except in compliance with the License. You may obtain a copy of
 * the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
 * WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
 * License for the specific language governing permissions and limitations under
 * the License.
 */

#pragma once

#include "twolane/admm.hpp"
#include "twolane/config.hpp"
#include "twolane/controllers/baselines.hpp"
#include "twolane/controllers/centralized.hpp"
#include "twolane/controllers/controller.hpp"
#include "twolane/controllers/mpc.hpp"
#include "twolane/errors.hpp"
#include "twolane/estimation.hpp"
#include "twolane/harness.hpp"
#include "twolane/metrics.hpp"
#include "twolane/plant.hpp"
#include "twolane/prediction.hpp"
#include "twolane/qp.hpp"
#include "twolane/topology.hpp"
#include "twolane/types.hpp"
