#pragma once

#include "chart.hpp"
#include "dhym.hpp"
#include "expr.hpp"
#include "forms.hpp"
#include "geometry.hpp"
#include "instantons.hpp"
#include "io.hpp"
#include "quadrature.hpp"
#include "report.hpp"
#include "slag.hpp"
#include "specfun.hpp"
#include "spectra.hpp"
