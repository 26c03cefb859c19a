#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace nsi {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class EmptySetError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class SingularityError : public Error { using Error::Error; };
class InvariantViolation : public Error { using Error::Error; };
class SizingError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };

class AccuracyError : public Error {
public:
    AccuracyError(const std::string& what, double achieved)
        : Error(what), achieved_(achieved) {}
    double achieved() const { return achieved_; }

private:
    double achieved_;
};

// carries the clause that failed and the offending point (x1, x2, t)
class CertificationError : public Error {
public:
    CertificationError(std::string clause, std::array<double, 3> witness, const std::string& what)
        : Error(what), clause_(std::move(clause)), witness_(witness) {}
    const std::string& clause() const { return clause_; }
    const std::array<double, 3>& witness() const { return witness_; }

private:
    std::string clause_;
    std::array<double, 3> witness_;
};

class ConstructionError : public CertificationError { using CertificationError::CertificationError; };
class CombinationError : public CertificationError { using CertificationError::CertificationError; };

}  // end of namespace nsi
