#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "simprob/trace.hpp"

namespace simprob {

// One trace as a single-line JSON object:
//   {trace_id, entries:[{addr, family, params, value, log_p, log_q, scope_id,
//    iteration, accepted}], observes:[{addr, log_likelihood}], predicts:{}, log_weight}
// Non-finite reals (a zero-likelihood observe) are written as null and read
// back as -infinity.
std::string trace_to_jsonl(const Trace & trace);
Trace trace_from_jsonl(const std::string & line);

void write_trace(std::ostream & out, const Trace & trace);

// Streams traces from JSONL, skipping blank lines. Errors carry the 1-based
// line number.
class TraceReader {
public:
    explicit TraceReader(std::istream & in) : in_(in) {}

    std::optional<Trace> next();
    std::size_t line() const noexcept { return line_; }

private:
    std::istream & in_;
    std::size_t line_ = 0;
};

} // namespace simprob
