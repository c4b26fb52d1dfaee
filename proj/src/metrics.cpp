#include "manga/metrics.hpp"

#include "manga/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace manga {

Moments moments(const FeatureSet& s) {
    const auto n = s.features.rows();
    if (n < 2) throw DataError("Frechet distance needs at least 2 feature vectors, got " + std::to_string(n));
    if (!s.features.allFinite()) throw DataError("feature set contains non-finite values");
    Moments m;
    m.mean = s.features.colwise().mean().transpose();
    Eigen::MatrixXd centered = s.features.rowwise() - m.mean.transpose();
    m.covariance = (centered.transpose() * centered) / double(n - 1);
    return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw RuntimeError("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double bound = tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -bound) throw RuntimeError("matrix is not positive semi-definite (eigenvalue " + std::to_string(ev[i]) + ")");
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const Moments& a, const Moments& b) {
    if (a.mean.size() != b.mean.size()) throw DataError("feature dimensions differ");
    const Eigen::MatrixXd root_a = psd_sqrt(a.covariance);
    const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
    const Eigen::MatrixXd root = psd_sqrt(inner);
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double d2 = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * root.trace();
    // round-off can leave a tiny negative value for identical inputs
    return std::max(d2, 0.0);
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor_id != b.extractor_id)
        throw DataError("feature extractors differ: '" + a.extractor_id + "' vs '" + b.extractor_id + "'");
    if (a.features.cols() != b.features.cols()) throw DataError("feature dimensions differ");
    return frechet_distance(moments(a), moments(b));
}

double clip_i(const FeatureSet& gen, const FeatureSet& ref) {
    if (gen.extractor_id != ref.extractor_id) throw DataError("feature extractors differ");
    if (gen.features.rows() != ref.features.rows())
        throw DataError("clip_i needs paired sets: " + std::to_string(gen.features.rows()) + " vs " +
                        std::to_string(ref.features.rows()));
    if (gen.features.rows() == 0) throw DataError("clip_i: empty feature sets");
    if (gen.features.cols() != ref.features.cols()) throw DataError("feature dimensions differ");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < gen.features.rows(); ++i) {
        const double na = gen.features.row(i).norm(), nb = ref.features.row(i).norm();
        if (na == 0.0) throw DataError("clip_i: generated feature " + std::to_string(i) + " is a zero vector");
        if (nb == 0.0) throw DataError("clip_i: reference feature " + std::to_string(i) + " is a zero vector");
        acc += gen.features.row(i).dot(ref.features.row(i)) / (na * nb);
    }
    return acc / double(gen.features.rows());
}

FeatureSet FeatureExtractor::extract_all(const std::vector<Image>& images) const {
    FeatureSet s;
    s.extractor_id = id();
    for (std::size_t i = 0; i < images.size(); ++i) {
        Eigen::VectorXd f = extract(images[i]);
        if (i == 0) s.features.resize(Eigen::Index(images.size()), f.size());
        s.features.row(Eigen::Index(i)) = f.transpose();
    }
    return s;
}

Eigen::VectorXd StubExtractor::extract(const Image& img) const {
    const Plane g = img.gray();
    Eigen::VectorXd out(64);
    const int H = img.height(), W = img.width();
    for (int gy = 0; gy < 8; ++gy)
        for (int gx = 0; gx < 8; ++gx) {
            const int y0 = gy * H / 8, y1 = std::max((gy + 1) * H / 8, y0 + 1);
            const int x0 = gx * W / 8, x1 = std::max((gx + 1) * W / 8, x0 + 1);
            out[gy * 8 + gx] = double(g.block(y0, x0, std::min(y1, H) - y0, std::min(x1, W) - x0).mean());
        }
    return out;
}

}  // namespace manga
