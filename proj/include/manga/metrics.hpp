#pragma once

#include "manga/image.hpp"
#include "manga/tensor.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace manga {

/// N x d features tagged with the extractor that produced them.
struct FeatureSet {
    Eigen::MatrixXd features;
    std::string extractor_id;
};

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  ///< unbiased (N - 1)
};

Moments moments(const FeatureSet& s);

/// Symmetric PSD square root by eigendecomposition. Eigenvalues in
/// (-tol * max(1, |lambda_max|), 0) clamp to zero; more negative ones throw.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol = 1e-6);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// product root is taken from the symmetric form S_a^(1/2) S_b S_a^(1/2).
double frechet_distance(const Moments& a, const Moments& b);
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

/// Mean cosine similarity of paired rows, in [-1, 1].
double clip_i(const FeatureSet& gen, const FeatureSet& ref);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual Eigen::VectorXd extract(const Image& img) const = 0;

    FeatureSet extract_all(const std::vector<Image>& images) const;
};

/// Gray image average-pooled onto an 8 x 8 grid, flattened (64 features).
class StubExtractor final : public FeatureExtractor {
public:
    std::string id() const override { return "stub-gray8x8"; }
    Eigen::VectorXd extract(const Image& img) const override;
};

}  // namespace manga
