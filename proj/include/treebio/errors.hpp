#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace treebio {

/// Base class of everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problems with inputs, configuration, or file contents.
/// The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

/// Failures of a numerical procedure on otherwise well-formed inputs.
/// The CLI maps these to exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

// -- parsing ----------------------------------------------------------------

class EmptyInput : public InputError {
public:
    EmptyInput() : InputError("empty input: no header row") {}
    explicit EmptyInput(const std::string& what) : InputError(what) {}
};

class MissingColumn : public InputError {
public:
    explicit MissingColumn(const std::string& name)
        : InputError("missing column: " + name), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class BadNumeric : public InputError {
public:
    BadNumeric(std::size_t row, const std::string& column, const std::string& cell)
        : InputError("row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + cell + "'"),
          row_(row), column_(column) {}
    std::size_t row() const { return row_; }
    const std::string& column() const { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

// -- dataset ops ------------------------------------------------------------

class EmptyDataset : public InputError {
public:
    EmptyDataset() : InputError("dataset has no records") {}
    explicit EmptyDataset(const std::string& what) : InputError(what) {}
};

class BadFraction : public InputError {
public:
    explicit BadFraction(double f)
        : InputError("test fraction must lie in (0, 1), got " + std::to_string(f)) {}
};

// -- shared model-facing errors ----------------------------------------------

class MissingField : public InputError {
public:
    MissingField(const std::string& context, const std::string& field)
        : InputError(context + ": record is missing required field '" + field + "'"),
          field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class NonpositiveInput : public InputError {
public:
    explicit NonpositiveInput(const std::string& what) : InputError(what) {}
};

class LengthMismatch : public InputError {
public:
    LengthMismatch(std::size_t a, std::size_t b)
        : InputError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class TooFewPoints : public InputError {
public:
    explicit TooFewPoints(const std::string& what) : InputError(what) {}
};

// -- gpr ----------------------------------------------------------------------

class NonpositiveLengthScale : public InputError {
public:
    explicit NonpositiveLengthScale(double l)
        : InputError("length scale must be positive, got " + std::to_string(l)) {}
};

class EmptyTraining : public InputError {
public:
    explicit EmptyTraining(const std::string& what) : InputError(what) {}
};

class SearchRangeInvalid : public InputError {
public:
    explicit SearchRangeInvalid(const std::string& what) : InputError(what) {}
};

class DegenerateData : public NumericError {
public:
    explicit DegenerateData(const std::string& what) : NumericError(what) {}
};

class FactorizationFailure : public NumericError {
public:
    explicit FactorizationFailure(double jitter_attempted)
        : NumericError("factorization failed; largest jitter attempted " +
                       std::to_string(jitter_attempted)),
          jitter_attempted_(jitter_attempted) {}
    double jitter_attempted() const { return jitter_attempted_; }

private:
    double jitter_attempted_;
};

// -- allometry -----------------------------------------------------------------

class RankDeficient : public NumericError {
public:
    explicit RankDeficient(const std::string& what) : NumericError(what) {}
};

// -- evaluation ------------------------------------------------------------------

class ZeroVariance : public NumericError {
public:
    ZeroVariance() : NumericError("ground truth has zero variance on the retained set") {}
};

class ZeroGroundTruth : public InputError {
public:
    explicit ZeroGroundTruth(std::size_t index)
        : InputError("ground truth value at index " + std::to_string(index) +
                     " is zero; bias is undefined") {}
};

class EmptyPlot : public InputError {
public:
    EmptyPlot() : InputError("plot contains no trees") {}
};

// -- uncertainty ---------------------------------------------------------------------

class NonpositiveLogBiomass : public InputError {
public:
    explicit NonpositiveLogBiomass(const std::string& what) : InputError(what) {}
};

class AllPocketsEmpty : public NumericError {
public:
    explicit AllPocketsEmpty(const std::string& what) : NumericError(what) {}
};

// -- persistence ------------------------------------------------------------------------

class ModelFormatError : public InputError {
public:
    explicit ModelFormatError(const std::string& what) : InputError(what) {}
};

}  // namespace treebio
