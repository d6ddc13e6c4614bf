#ifndef SSP_SSP_HPP
#define SSP_SSP_HPP

#include "ssp/analysis.hpp"
#include "ssp/config.hpp"
#include "ssp/episode.hpp"
#include "ssp/error.hpp"
#include "ssp/evaluate.hpp"
#include "ssp/loss.hpp"
#include "ssp/metrics.hpp"
#include "ssp/ops.hpp"
#include "ssp/pipeline.hpp"
#include "ssp/sspt.hpp"
#include "ssp/synthetic.hpp"
#include "ssp/tensor.hpp"

#endif // SSP_SSP_HPP
