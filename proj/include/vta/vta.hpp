/*
 * Licensed to the Apache Software Foundation (ASF) under one
 * or more contributor license agreements.  See the NOTICE file
 * distributed with this work for additional information
 * regarding copyright ownership.  The ASF licenses this file
 * to you under the Apache License, Version 2.0 (the
 * "License"); you may not use this file except in compliance
 * with the License.  You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

/*!
 * \file vta.hpp
 * \brief Umbrella header for the simulator, compiler and tuner.
 */
#pragma once

#include "asm.hpp"
#include "common.hpp"
#include "compiler.hpp"
#include "config.hpp"
#include "isa.hpp"
#include "refops.hpp"
#include "runtime.hpp"
#include "sim.hpp"
#include "tensor.hpp"
#include "tuner.hpp"
#include "workloads.hpp"

namespace vta {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vta
