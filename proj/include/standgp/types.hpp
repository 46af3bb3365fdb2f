#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace standgp {

inline constexpr const char* kVersion = "0.1.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Number of stand attributes in the canonical species-specific layout.
inline constexpr int kNumAttributes = 15;
inline constexpr int kNumSpecies = 3;
inline constexpr int kAttributesPerSpecies = 5;

inline const std::array<std::string, kNumSpecies> kSpeciesNames = {"pine", "spruce", "decid"};
inline const std::array<std::string, kAttributesPerSpecies> kAttributeKinds = {"hgm", "dgm", "n",
                                                                               "ba", "v"};

/// Canonical attribute column order: species-major (pine, spruce, decid),
/// within a species: hgm, dgm, n, ba, v.
inline std::array<std::string, kNumAttributes> attribute_names() {
    std::array<std::string, kNumAttributes> names;
    int idx = 0;
    for (const auto& sp : kSpeciesNames) {
        for (const auto& kind : kAttributeKinds) {
            names[idx++] = sp + "_" + kind;
        }
    }
    return names;
}

inline int attribute_index(int species, int kind) { return species * kAttributesPerSpecies + kind; }

enum class Method { gpr, knn, bayes };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::gpr: return "gpr";
        case Method::knn: return "knn";
        default: return "bayes";
    }
}

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid data, dimensions, or arguments supplied by the caller.
class InputError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class PredictionError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Root finding or factorization did not converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

inline Method parse_method(const std::string& s) {
    if (s == "gpr") return Method::gpr;
    if (s == "knn") return Method::knn;
    if (s == "bayes") return Method::bayes;
    throw InputError("unknown method '" + s + "', expected gpr, knn, or bayes");
}

}  // namespace standgp
