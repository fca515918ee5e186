#pragma once

#include "weinfib/core.hpp"
#include "weinfib/numerics.hpp"
#include "weinfib/base_grid.hpp"
#include "weinfib/fibre_complex.hpp"
#include "weinfib/fibred_forms.hpp"
#include "weinfib/form_io.hpp"
#include "weinfib/models.hpp"
#include "weinfib/fibred_hodge.hpp"
#include "weinfib/poincare.hpp"
#include "weinfib/polarization.hpp"
#include "weinfib/weinstein.hpp"
#include "weinfib/fibration_space.hpp"
