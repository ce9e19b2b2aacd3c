#ifndef KNG_KNG_HPP
#define KNG_KNG_HPP

#include "kng/errors.hpp"
#include "kng/harness.hpp"
#include "kng/manifest.hpp"
#include "kng/metrics.hpp"
#include "kng/model.hpp"
#include "kng/model_io.hpp"
#include "kng/scoring.hpp"
#include "kng/synth.hpp"
#include "kng/tensor_io.hpp"

#endif // KNG_KNG_HPP
