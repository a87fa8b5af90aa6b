#pragma once

#include "esmaml/errors.hpp"
#include "esmaml/core.hpp"
#include "esmaml/parallel.hpp"
#include "esmaml/format.hpp"
#include "esmaml/stats.hpp"
#include "esmaml/objectives.hpp"
#include "esmaml/environments.hpp"
#include "esmaml/adaptation.hpp"
#include "esmaml/meta.hpp"
#include "esmaml/theory.hpp"
#include "esmaml/config.hpp"
#include "esmaml/compare.hpp"
#include "esmaml/harness.hpp"
