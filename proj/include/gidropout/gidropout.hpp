#pragma once

#include "gidropout/corpus.hpp"
#include "gidropout/dropout.hpp"
#include "gidropout/error.hpp"
#include "gidropout/harness.hpp"
#include "gidropout/models.hpp"
#include "gidropout/nn/adam.hpp"
#include "gidropout/nn/attention.hpp"
#include "gidropout/nn/conv.hpp"
#include "gidropout/nn/gradcheck.hpp"
#include "gidropout/nn/layers.hpp"
#include "gidropout/nn/lstm.hpp"
#include "gidropout/nn/tensor.hpp"
#include "gidropout/random.hpp"
#include "gidropout/scoring.hpp"
#include "gidropout/serialization.hpp"
#include "gidropout/synth.hpp"
