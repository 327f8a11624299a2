/* Copyright 2026 The conpono-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "conpono/common.hpp"
#include "conpono/nn/adam.hpp"
#include "conpono/nn/gradcheck.hpp"
#include "conpono/nn/ops.hpp"
#include "conpono/nn/params.hpp"
#include "conpono/corpus.hpp"
#include "conpono/sampler.hpp"
#include "conpono/encoder.hpp"
#include "conpono/objective.hpp"
#include "conpono/checkpoint.hpp"
#include "conpono/trainer.hpp"
#include "conpono/probe.hpp"
#include "conpono/markers.hpp"
#include "conpono/manifest.hpp"
#include "conpono/shards.hpp"
