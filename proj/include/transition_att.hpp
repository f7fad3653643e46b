#pragma once

#include "transition_att/dgp.hpp"
#include "transition_att/effects.hpp"
#include "transition_att/error.hpp"
#include "transition_att/inference.hpp"
#include "transition_att/mixture.hpp"
#include "transition_att/mixture_effects.hpp"
#include "transition_att/panel.hpp"
#include "transition_att/parallel.hpp"
#include "transition_att/staggered.hpp"
