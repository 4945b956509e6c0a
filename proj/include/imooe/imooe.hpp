#pragma once

#include "imooe/autodiff.hpp"
#include "imooe/datasets/initial_conditions.hpp"
#include "imooe/datasets/io.hpp"
#include "imooe/datasets/simulate.hpp"
#include "imooe/datasets/solvers.hpp"
#include "imooe/datasets/systems.hpp"
#include "imooe/errors.hpp"
#include "imooe/evaluation/metrics.hpp"
#include "imooe/evaluation/plots.hpp"
#include "imooe/evaluation/report.hpp"
#include "imooe/fft.hpp"
#include "imooe/model/checkpoint.hpp"
#include "imooe/model/config.hpp"
#include "imooe/model/mooe.hpp"
#include "imooe/objectives.hpp"
#include "imooe/parallel.hpp"
#include "imooe/random.hpp"
#include "imooe/spectral.hpp"
#include "imooe/tensor.hpp"
#include "imooe/training/adam.hpp"
#include "imooe/training/config.hpp"
#include "imooe/training/trainer.hpp"
