#include "stdde/flow_series.hpp"

#include "stdde/error.hpp"

namespace stdde {

FlowSeries FlowSeries::slice(int begin, int end) const {
  if (begin < 0 || end > steps() || begin > end) throw InputError("flow slice out of range");
  FlowSeries out = *this;
  out.values = values.middleRows(begin, end - begin);
  out.start_minute = minute_at(begin);
  return out;
}

}  // namespace stdde
