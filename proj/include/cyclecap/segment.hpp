#pragma once

namespace cyclecap {

// Normalised temporal segment [start, end] within the video's [0, 1] span.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool valid() const { return start < end; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Temporal IOU in [0, 1]. Throws ContractViolation on a degenerate segment.
double tiou(const Segment& a, const Segment& b);

// Generalised IOU in (-1, 1]: IOU - (|hull| - |union|) / |hull|.
double giou_1d(const Segment& a, const Segment& b);

struct GiouGrad {
  double value = 0.0;
  double d_start = 0.0;  // d giou / d a.start
  double d_end = 0.0;    // d giou / d a.end
};

// gIOU and its (sub)gradient with respect to the first segment's endpoints.
// Ties in the min/max selections resolve toward the first segment.
GiouGrad giou_1d_grad(const Segment& a, const Segment& b);

}  // namespace cyclecap
