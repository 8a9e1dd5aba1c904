// Copyright 2026 The slmfg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "slmfg/analysis.hpp"
#include "slmfg/core.hpp"
#include "slmfg/examples.hpp"
#include "slmfg/expr.hpp"
#include "slmfg/fixedpoint.hpp"
#include "slmfg/flow.hpp"
#include "slmfg/gibbs.hpp"
#include "slmfg/hjb.hpp"
#include "slmfg/lattice.hpp"
#include "slmfg/parallel.hpp"
#include "slmfg/problem.hpp"
#include "slmfg/transport.hpp"
