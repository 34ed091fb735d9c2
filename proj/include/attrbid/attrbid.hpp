/*
 * Copyright 2026 The attrbid Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "attrbid/attribution_model.hpp"
#include "attrbid/bidding.hpp"
#include "attrbid/common.hpp"
#include "attrbid/conversion_model.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/harness.hpp"
#include "attrbid/labeling.hpp"
#include "attrbid/lbfgs.hpp"
#include "attrbid/log_io.hpp"
#include "attrbid/metrics.hpp"
#include "attrbid/special_functions.hpp"
#include "attrbid/synthetic.hpp"
