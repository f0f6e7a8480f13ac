#pragma once

#include "fym/tensor/adam.hpp"
#include "fym/tensor/array.hpp"
#include "fym/tensor/gradcheck.hpp"
#include "fym/tensor/ops.hpp"
#include "fym/tensor/tape.hpp"
