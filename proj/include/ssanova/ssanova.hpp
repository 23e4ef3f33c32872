#pragma once

#include "ssanova/errors.hpp"
#include "ssanova/kernel.hpp"
#include "ssanova/model.hpp"
#include "ssanova/dataset.hpp"
#include "ssanova/parallel.hpp"
#include "ssanova/solver.hpp"
#include "ssanova/gcv.hpp"
#include "ssanova/asp.hpp"
#include "ssanova/methods.hpp"
#include "ssanova/simulation.hpp"
