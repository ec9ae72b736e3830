#pragma once

#include "spcal/calibration_fit.hpp"
#include "spcal/detector_sim.hpp"
#include "spcal/error.hpp"
#include "spcal/frame_io.hpp"
#include "spcal/frame_pipeline.hpp"
#include "spcal/image.hpp"
#include "spcal/json_io.hpp"
#include "spcal/nelder_mead.hpp"
#include "spcal/parallel.hpp"
#include "spcal/photocount_model.hpp"
#include "spcal/source_transfer.hpp"
