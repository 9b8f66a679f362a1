#pragma once

#include "facekit/error.hpp"
#include "facekit/model.hpp"
#include "facekit/solver.hpp"
#include "facekit/postprocess.hpp"
#include "facekit/metrics.hpp"
#include "facekit/emotion.hpp"
#include "facekit/fixtures.hpp"
#include "facekit/io.hpp"
#include "facekit/cli.hpp"
