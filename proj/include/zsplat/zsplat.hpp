/* Copyright 2026 The zsplat Authors. All Rights Reserved.

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

#ifndef ZSPLAT_ZSPLAT_HPP
#define ZSPLAT_ZSPLAT_HPP

#include "zsplat/checkpoint.hpp"
#include "zsplat/config.hpp"
#include "zsplat/errors.hpp"
#include "zsplat/gaussian_head.hpp"
#include "zsplat/io.hpp"
#include "zsplat/morton.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/parallel.hpp"
#include "zsplat/pipeline.hpp"
#include "zsplat/point_representation.hpp"
#include "zsplat/scene.hpp"
#include "zsplat/synthetic.hpp"
#include "zsplat/view_select.hpp"
#include "zsplat/zformer.hpp"

#endif  // ZSPLAT_ZSPLAT_HPP
