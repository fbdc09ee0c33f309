#pragma once

#include "csns/geometry.hpp"
#include "csns/kernel.hpp"
#include "csns/config.hpp"
#include "csns/field.hpp"
#include "csns/fft.hpp"
#include "csns/spectral.hpp"
#include "csns/parallel.hpp"
#include "csns/particles.hpp"
#include "csns/init.hpp"
#include "csns/state.hpp"
#include "csns/diagnostics.hpp"
#include "csns/coupling.hpp"
#include "csns/oracle.hpp"
#include "csns/io.hpp"
