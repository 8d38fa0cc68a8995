#pragma once

#include "modalml/cart.hpp"
#include "modalml/dataset.hpp"
#include "modalml/eigen.hpp"
#include "modalml/ensemble.hpp"
#include "modalml/error.hpp"
#include "modalml/matrix.hpp"
#include "modalml/metrics.hpp"
#include "modalml/pipeline.hpp"
#include "modalml/rng.hpp"
#include "modalml/spline.hpp"
#include "modalml/svg.hpp"
#include "modalml/sysmodel.hpp"
