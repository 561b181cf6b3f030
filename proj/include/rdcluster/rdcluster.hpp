#pragma once

// Sharp RD estimation and cluster-robust inference:
// local linear weights, five standard errors (EHW, classical NN, naive
// clustered NN, CRR, clustered NN with companion clusters), cluster
// influence diagnostics, plug-in bandwidths and a Monte Carlo lab.

#include "rdcluster/csv.hpp"
#include "rdcluster/diagnostics.hpp"
#include "rdcluster/errors.hpp"
#include "rdcluster/estimator.hpp"
#include "rdcluster/kernel.hpp"
#include "rdcluster/neighbors.hpp"
#include "rdcluster/numeric.hpp"
#include "rdcluster/report.hpp"
#include "rdcluster/rng.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/simlab.hpp"
#include "rdcluster/variance.hpp"
#include "rdcluster/weights.hpp"
