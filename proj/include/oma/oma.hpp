#pragma once

#include "oma/beam.hpp"
#include "oma/era.hpp"
#include "oma/error.hpp"
#include "oma/frvf.hpp"
#include "oma/iir.hpp"
#include "oma/io.hpp"
#include "oma/signals.hpp"
#include "oma/stabilization.hpp"
#include "oma/types.hpp"
