#pragma once

#include "soclab/error.hpp"
#include "soclab/rng.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/objectives.hpp"
#include "soclab/oracle.hpp"
#include "soclab/decoder.hpp"
#include "soclab/tasks.hpp"
#include "soclab/io.hpp"
#include "soclab/harness.hpp"
#include "soclab/checks.hpp"
