#pragma once

#include "ecgmix/config.hpp"
#include "ecgmix/dataset_io.hpp"
#include "ecgmix/errors.hpp"
#include "ecgmix/experiment.hpp"
#include "ecgmix/gmm.hpp"
#include "ecgmix/leads.hpp"
#include "ecgmix/metrics.hpp"
#include "ecgmix/nn/adam.hpp"
#include "ecgmix/nn/network.hpp"
#include "ecgmix/nn/ops.hpp"
#include "ecgmix/nn/params.hpp"
#include "ecgmix/noisy_label.hpp"
#include "ecgmix/record.hpp"
#include "ecgmix/rng.hpp"
#include "ecgmix/signal_prep.hpp"
#include "ecgmix/swa.hpp"
#include "ecgmix/synth.hpp"
#include "ecgmix/tensor.hpp"
#include "ecgmix/train.hpp"
