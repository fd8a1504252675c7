#pragma once

#include "cvr/error.hpp"
#include "cvr/phase.hpp"
#include "cvr/zip_load.hpp"
#include "cvr/feeder.hpp"
#include "cvr/feeder_io.hpp"
#include "cvr/sensitivity.hpp"
#include "cvr/uncertainty.hpp"

#include "cvr/enrich/series.hpp"
#include "cvr/enrich/gpr.hpp"
#include "cvr/enrich/markov.hpp"
#include "cvr/enrich/weights.hpp"
#include "cvr/enrich/moments.hpp"
#include "cvr/enrich/enrich.hpp"

#include "cvr/drcc/layout.hpp"
#include "cvr/drcc/affine_model.hpp"
#include "cvr/drcc/chance_rows.hpp"
#include "cvr/drcc/socp.hpp"
#include "cvr/drcc/dispatch.hpp"

#include "cvr/validation/sweep.hpp"
#include "cvr/validation/monte_carlo.hpp"
#include "cvr/validation/energy.hpp"

#include "cvr/synthetic.hpp"
