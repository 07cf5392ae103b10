#pragma once

#include "dedsi/common.hpp"
#include "dedsi/corpus.hpp"
#include "dedsi/synthetic.hpp"
#include "dedsi/vocab.hpp"
#include "dedsi/model.hpp"
#include "dedsi/beam.hpp"
#include "dedsi/train.hpp"
#include "dedsi/ensemble.hpp"
#include "dedsi/gossip.hpp"
#include "dedsi/eval.hpp"
#include "dedsi/config.hpp"
#include "dedsi/experiments.hpp"
