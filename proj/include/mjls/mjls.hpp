// Copyright 2026 The mjls Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mjls/builtin.hpp"
#include "mjls/core.hpp"
#include "mjls/errors.hpp"
#include "mjls/estimator.hpp"
#include "mjls/exactsolve.hpp"
#include "mjls/grad.hpp"
#include "mjls/learner.hpp"
#include "mjls/modelgen.hpp"
#include "mjls/random.hpp"
#include "mjls/sim.hpp"
