#pragma once

#include "rlf/config.hpp"
#include "rlf/descriptor.hpp"
#include "rlf/error.hpp"
#include "rlf/eval.hpp"
#include "rlf/filters.hpp"
#include "rlf/formats.hpp"
#include "rlf/image.hpp"
#include "rlf/imageio.hpp"
#include "rlf/keypoints.hpp"
#include "rlf/matching.hpp"
#include "rlf/preprocess.hpp"
#include "rlf/spotting.hpp"
#include "rlf/synth.hpp"
