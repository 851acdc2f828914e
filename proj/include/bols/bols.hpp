#pragma once

#include "bols/random.hpp"
#include "bols/distributions.hpp"
#include "bols/policies.hpp"
#include "bols/core.hpp"
#include "bols/estimators.hpp"
#include "bols/inference.hpp"
#include "bols/contextual.hpp"
#include "bols/harness.hpp"
#include "bols/json_io.hpp"
#include "bols/figures.hpp"
