#pragma once

#include "kostpm/basis.hpp"
#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/io.hpp"
#include "kostpm/koopman.hpp"
#include "kostpm/linalg.hpp"
#include "kostpm/parallel.hpp"
#include "kostpm/reduce.hpp"
#include "kostpm/updf.hpp"
#include "kostpm/validate.hpp"
