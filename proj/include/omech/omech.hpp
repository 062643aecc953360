#ifndef OMECH_OMECH_HPP
#define OMECH_OMECH_HPP

#include "omech/calibrate.hpp"
#include "omech/device.hpp"
#include "omech/errors.hpp"
#include "omech/model.hpp"
#include "omech/pulse.hpp"
#include "omech/spectra.hpp"
#include "omech/two_mode.hpp"

#endif // OMECH_OMECH_HPP
