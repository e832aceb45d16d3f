#ifndef IFSL_IFSL_HPP
#define IFSL_IFSL_HPP

#include "error.hpp"
#include "hashing.hpp"
#include "nn_state.hpp"
#include "stats.hpp"
#include "data/dataset.hpp"
#include "data/episode.hpp"
#include "data/preprocess.hpp"
#include "data/synthetic.hpp"
#include "predictor/accuracy.hpp"
#include "predictor/loss.hpp"
#include "predictor/network.hpp"
#include "predictor/trainer.hpp"
#include "classifier/prototype.hpp"
#include "classifier/episodic.hpp"
#include "selector/gumbel.hpp"
#include "selector/encoder.hpp"
#include "selector/trainer.hpp"
#include "unknown/mine.hpp"
#include "unknown/mixed.hpp"
#include "unknown/trainer.hpp"
#include "unknown/gate.hpp"
#include "intervention/intervention.hpp"
#include "harness/checkpoint.hpp"
#include "harness/report.hpp"
#include "harness/evaluate.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "harness/service.hpp"

#endif // IFSL_IFSL_HPP
