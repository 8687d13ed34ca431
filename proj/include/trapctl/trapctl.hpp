#pragma once

#include "trapctl/errors.hpp"
#include "trapctl/ode.hpp"
#include "trapctl/ermakov.hpp"
#include "trapctl/protocol.hpp"
#include "trapctl/phasespace.hpp"
#include "trapctl/verify.hpp"
#include "trapctl/io.hpp"
