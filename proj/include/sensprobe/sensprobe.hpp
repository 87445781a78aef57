#ifndef SENSPROBE_SENSPROBE_HPP
#define SENSPROBE_SENSPROBE_HPP

#include "sensprobe/attack.hpp"
#include "sensprobe/config.hpp"
#include "sensprobe/dataset.hpp"
#include "sensprobe/error.hpp"
#include "sensprobe/exact.hpp"
#include "sensprobe/half.hpp"
#include "sensprobe/mlp.hpp"
#include "sensprobe/pipeline.hpp"
#include "sensprobe/profile.hpp"
#include "sensprobe/random.hpp"
#include "sensprobe/report.hpp"
#include "sensprobe/search.hpp"
#include "sensprobe/smt_encode.hpp"
#include "sensprobe/solver.hpp"
#include "sensprobe/train.hpp"

#endif  // SENSPROBE_SENSPROBE_HPP
