#pragma once

#include "mird/denoisers.hpp"
#include "mird/diffusion.hpp"
#include "mird/edges.hpp"
#include "mird/flo_io.hpp"
#include "mird/flow.hpp"
#include "mird/image.hpp"
#include "mird/imaging.hpp"
#include "mird/mc_verify.hpp"
#include "mird/pipeline.hpp"
#include "mird/png_io.hpp"
#include "mird/schedule.hpp"
#include "mird/synthdata.hpp"
#include "mird/taumetric.hpp"
