// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "rhythmkit/dsp.hpp"
#include "rhythmkit/stmap.hpp"

namespace rhythmkit {

// Classical spectral estimators over raw RGB block traces. All three
// condition the pulse signal with smoothness-priors detrending and the
// zero-phase band-pass before the spectral peak, and all fail with
// NoPeakError (never a number) on clips with no temporal variation.

// Mean green trace over blocks → conditioning → spectral peak.
HrEstimate estimate_green(const BlockTraces& traces);

// Per-block mean-normalized channels, X = 3Rn−2Gn, Yc = 1.5Rn+Gn−1.5Bn,
// S = X − (σX/σYc)·Yc, blocks averaged, then conditioning and the peak.
// Throws ValidationError("degenerate channel") when a channel mean is zero.
HrEstimate estimate_chrom(const BlockTraces& traces);

// Sliding 1.6 s windows over the block-averaged trace; per-window
// mean-normalized channels, S1 = Gn−Bn, S2 = Gn+Bn−2Rn,
// h = S1 + (σS1/σS2)·S2, overlap-added, then the spectral peak. Throws
// ValidationError when the window is longer than the clip.
HrEstimate estimate_pos(const BlockTraces& traces);

// Dispatch by CLI name: "green", "chrom" or "pos".
HrEstimate estimate_trace(const std::string& method, const BlockTraces& traces);

// Spatial average of one channel across blocks, as a conditioned-ready
// signal.
PulseSignal spatial_average_trace(const BlockTraces& traces, int channel);

}  // namespace rhythmkit
