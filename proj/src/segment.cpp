#include "cyclecap/segment.hpp"

#include <algorithm>

#include "cyclecap/error.hpp"

namespace cyclecap {

namespace {

void require_valid(const Segment& s, const char* op) {
  if (!s.valid()) throw ContractViolation(std::string(op) + ": degenerate segment (start >= end)");
}

}  // namespace

double tiou(const Segment& a, const Segment& b) {
  require_valid(a, "tiou");
  require_valid(b, "tiou");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

double giou_1d(const Segment& a, const Segment& b) {
  require_valid(a, "giou_1d");
  require_valid(b, "giou_1d");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  const double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
  // hull >= union exactly; rounding in `uni` can cross it by an ulp.
  return inter / uni - std::max(0.0, hull - uni) / hull;
}

GiouGrad giou_1d_grad(const Segment& a, const Segment& b) {
  require_valid(a, "giou_1d");
  require_valid(b, "giou_1d");
  const double raw_inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  const double inter = std::max(0.0, raw_inter);
  const double uni = a.length() + b.length() - inter;
  const double hull = std::max(a.end, b.end) - std::min(a.start, b.start);

  double di_ds = 0.0, di_de = 0.0;
  if (raw_inter > 0.0) {
    if (a.start >= b.start) di_ds = -1.0;
    if (a.end <= b.end) di_de = 1.0;
  }
  const double du_ds = -1.0 - di_ds;
  const double du_de = 1.0 - di_de;
  const double dh_ds = a.start <= b.start ? -1.0 : 0.0;
  const double dh_de = a.end >= b.end ? 1.0 : 0.0;

  // giou = I/U - 1 + U/H
  GiouGrad g;
  g.value = inter / uni - std::max(0.0, hull - uni) / hull;
  g.d_start = di_ds / uni - inter * du_ds / (uni * uni) + du_ds / hull - uni * dh_ds / (hull * hull);
  g.d_end = di_de / uni - inter * du_de / (uni * uni) + du_de / hull - uni * dh_de / (hull * hull);
  return g;
}

}  // namespace cyclecap
