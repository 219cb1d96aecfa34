#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace simprob {

// Base for every error raised by the library. Catching this distinguishes
// simprob failures from exceptions thrown by user model code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SIMPROB_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

SIMPROB_DEFINE_ERROR(PreconditionError);
SIMPROB_DEFINE_ERROR(InvalidParameter);
SIMPROB_DEFINE_ERROR(DimensionMismatch);
SIMPROB_DEFINE_ERROR(AddressFamilyMismatch);
SIMPROB_DEFINE_ERROR(ScopeUnderflow);
SIMPROB_DEFINE_ERROR(NestedScopeReuse);
SIMPROB_DEFINE_ERROR(DuplicatePredictName);
SIMPROB_DEFINE_ERROR(AllWeightsZero);
SIMPROB_DEFINE_ERROR(MissingPredict);
SIMPROB_DEFINE_ERROR(UnknownHead);
SIMPROB_DEFINE_ERROR(VersionMismatch);
SIMPROB_DEFINE_ERROR(MalformedFile);
SIMPROB_DEFINE_ERROR(UnsupportedModel);
SIMPROB_DEFINE_ERROR(ConfigInvalid);

#undef SIMPROB_DEFINE_ERROR

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t step, double loss)
        : Error("non-finite loss " + std::to_string(loss) + " at training step " + std::to_string(step)),
          step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class MalformedTrace : public Error {
public:
    MalformedTrace(std::size_t line, const std::string & what)
        : Error("malformed trace at line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// A non-simprob exception escaped a model; carries the last address that
// executed successfully so the failure can be located in the model code.
class ModelError : public Error {
public:
    ModelError(const std::string & last_address, const std::string & what)
        : Error("model error after '" + (last_address.empty() ? std::string("<entry>") : last_address) +
                "': " + what),
          last_address_(last_address) {}

    const std::string & last_address() const noexcept { return last_address_; }

private:
    std::string last_address_;
};

} // namespace simprob
