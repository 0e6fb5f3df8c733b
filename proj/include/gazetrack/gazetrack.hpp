#pragma once

#include "gazetrack/bench.hpp"
#include "gazetrack/dataset_io.hpp"
#include "gazetrack/depth_model.hpp"
#include "gazetrack/error.hpp"
#include "gazetrack/event_io.hpp"
#include "gazetrack/gaze_geometry.hpp"
#include "gazetrack/pipeline.hpp"
#include "gazetrack/random.hpp"
#include "gazetrack/report.hpp"
#include "gazetrack/scenario.hpp"
#include "gazetrack/spatial_index.hpp"
#include "gazetrack/training.hpp"
#include "gazetrack/weights_io.hpp"
#include "gazetrack/widget_io.hpp"
