#pragma once

#include "sweep/core.hpp"
#include "sweep/geometry.hpp"
#include "sweep/dynamics.hpp"
#include "sweep/ocp.hpp"
#include "sweep/smoothed.hpp"
#include "sweep/shooting.hpp"
#include "sweep/certify.hpp"
#include "sweep/problems.hpp"
