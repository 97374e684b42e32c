#pragma once

#include "gemmbench/backend.hpp"
#include "gemmbench/cli.hpp"
#include "gemmbench/energy.hpp"
#include "gemmbench/error.hpp"
#include "gemmbench/kernels.hpp"
#include "gemmbench/matrix.hpp"
#include "gemmbench/measure.hpp"
#include "gemmbench/report.hpp"
#include "gemmbench/results.hpp"
#include "gemmbench/simd.hpp"
#include "gemmbench/subprocess.hpp"
#include "gemmbench/verify.hpp"
