// SPDX-License-Identifier: Apache-2.0
//
// Loading, validation and writing of the on-disk video layout:
//
//   <video_dir>/frames.bin     packed frames, "RKF1" header
//   <video_dir>/manifest.csv   frame_index,timestamp_ms (+ optional "# fps=")
//   <video_dir>/landmarks.csv  frame_index,x0,y0,...,x80,y80
//   <video_dir>/gt.csv         time_ms,hr_bpm[,bvp]
//
// All loaders are pure functions of their inputs; returned values are
// immutable and safe to share across threads.

#ifndef RHYTHMKIT_INGEST_HPP_
#define RHYTHMKIT_INGEST_HPP_

#include <string>

#include "rhythmkit/types.hpp"

namespace rhythmkit {

/// Load frames.bin + manifest.csv from `video_dir`. nominal_fps comes from the
/// manifest "# fps=" line when present, else from the median inter-frame
/// interval. subject_id/video_id default to the parent/own directory names.
FrameSequence load_frame_sequence(const std::string& video_dir);

/// Write frames.bin + manifest.csv; the exact inverse of load_frame_sequence.
void write_frame_sequence(const FrameSequence& seq, const std::string& video_dir);

/// Load landmarks.csv. Rows are keyed by frame_index; frames of the associated
/// sequence that have no row are marked invalid.
LandmarkTrack load_landmarks(const std::string& csv_path, int n_frames);

void write_landmarks(const LandmarkTrack& track, const std::string& csv_path);

GroundTruthTrace load_ground_truth(const std::string& csv_path);

void write_ground_truth(const GroundTruthTrace& trace, const std::string& csv_path);

/// Nearest-timestamp frame selection onto a uniform grid at target_fps.
/// Output timestamps are the grid times (rounded to integer ms).
/// Requires 0 < target_fps <= seq.nominal_fps.
FrameSequence resample_sequence(const FrameSequence& seq, double target_fps);

/// Centered moving average over valid frames only; the window is truncated at
/// sequence boundaries. Invalid frames stay invalid. `window` must be odd.
LandmarkTrack smooth_landmarks(const LandmarkTrack& track, int window);

}  // namespace rhythmkit

#endif  // RHYTHMKIT_INGEST_HPP_
