#ifndef PANSEG_PANSEG_HPP
#define PANSEG_PANSEG_HPP

// Umbrella header: the whole library.

#include "panseg/adam.hpp"
#include "panseg/augment.hpp"
#include "panseg/autodiff.hpp"
#include "panseg/checkpoint.hpp"
#include "panseg/common.hpp"
#include "panseg/config.hpp"
#include "panseg/dataset.hpp"
#include "panseg/experiment.hpp"
#include "panseg/gradcheck.hpp"
#include "panseg/image_io.hpp"
#include "panseg/layers.hpp"
#include "panseg/losses.hpp"
#include "panseg/mask.hpp"
#include "panseg/metrics.hpp"
#include "panseg/model.hpp"
#include "panseg/phantom.hpp"
#include "panseg/postprocess.hpp"
#include "panseg/rng.hpp"
#include "panseg/tensor.hpp"
#include "panseg/train.hpp"

#endif  // PANSEG_PANSEG_HPP
