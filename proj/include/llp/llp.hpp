#pragma once

#include "llp/common.hpp"
#include "llp/decoder.hpp"
#include "llp/eval.hpp"
#include "llp/io.hpp"
#include "llp/mixing.hpp"
#include "llp/sequence.hpp"
#include "llp/signal.hpp"
#include "llp/simgen.hpp"
