#pragma once

#include "meshgcn/adam.hpp"
#include "meshgcn/cheb.hpp"
#include "meshgcn/checkpoint.hpp"
#include "meshgcn/core.hpp"
#include "meshgcn/cv.hpp"
#include "meshgcn/dataset.hpp"
#include "meshgcn/explain.hpp"
#include "meshgcn/geodesic.hpp"
#include "meshgcn/gradcheck.hpp"
#include "meshgcn/graph.hpp"
#include "meshgcn/hierarchy.hpp"
#include "meshgcn/laplacian.hpp"
#include "meshgcn/layers.hpp"
#include "meshgcn/mesh.hpp"
#include "meshgcn/metrics.hpp"
#include "meshgcn/mlp.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/rng.hpp"
#include "meshgcn/spectral.hpp"
#include "meshgcn/split.hpp"
#include "meshgcn/train.hpp"
