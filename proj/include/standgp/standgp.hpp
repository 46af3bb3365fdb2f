#pragma once

#include "standgp/bayes_linear.hpp"
#include "standgp/dataset.hpp"
#include "standgp/evaluation.hpp"
#include "standgp/gpr.hpp"
#include "standgp/kernel.hpp"
#include "standgp/model_io.hpp"
#include "standgp/msn_knn.hpp"
#include "standgp/normal.hpp"
#include "standgp/rng.hpp"
#include "standgp/run_config.hpp"
#include "standgp/synthetic.hpp"
#include "standgp/thread_pool.hpp"
#include "standgp/truncation.hpp"
#include "standgp/types.hpp"
