#include "bitstain/eval/distribution.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bitstain::eval {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapMat = Eigen::Map<const RowMat>;
}  // namespace

void FeatureSet::validate() const {
    if (n < 2) throw ValueError("FeatureSet: need at least 2 vectors");
    if (d < 1) throw ValueError("FeatureSet: dimension must be positive");
    if (rows.size() != static_cast<std::size_t>(n) * d) {
        throw ShapeError("FeatureSet: row storage does not match N x D");
    }
    for (double v : rows) {
        if (!std::isfinite(v)) throw NumericError("FeatureSet: non-finite entry");
    }
}

FeatureSet FeatureSet::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file: " + path.string());
    auto fail = [&path](int line, const std::string& what) -> void {
        throw IoError("feature file " + path.string() + " line " + std::to_string(line) + ": " + what);
    };
    std::string line;
    if (!std::getline(in, line)) fail(1, "missing header");
    FeatureSet f;
    {
        std::istringstream is(line);
        std::string n_str, d_str;
        if (!std::getline(is, n_str, ',') || !std::getline(is, d_str, ',') ||
            !std::getline(is, f.extractor)) {
            fail(1, "header must be N,D,extractor_tag");
        }
        try {
            f.n = std::stoi(n_str);
            f.d = std::stoi(d_str);
        } catch (const std::exception&) {
            fail(1, "non-numeric N or D in header");
        }
    }
    if (f.n < 2 || f.d < 1) fail(1, "header declares invalid N or D");
    f.rows.reserve(static_cast<std::size_t>(f.n) * f.d);
    for (int r = 0; r < f.n; ++r) {
        if (!std::getline(in, line)) fail(r + 2, "missing row");
        std::istringstream is(line);
        std::string cell;
        int got = 0;
        while (std::getline(is, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                f.rows.push_back(v);
            } catch (const std::exception&) {
                fail(r + 2, "malformed value '" + cell + "'");
            }
            ++got;
        }
        if (got != f.d) fail(r + 2, "expected " + std::to_string(f.d) + " values");
    }
    f.validate();
    return f;
}

void FeatureSet::write_csv(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write feature file: " + path.string());
    out.precision(17);
    out << n << "," << d << "," << extractor << "\n";
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) out << (c ? "," : "") << at(r, c);
        out << "\n";
    }
}

GaussianMoments feature_moments(const FeatureSet& f) {
    f.validate();
    GaussianMoments m;
    m.d = f.d;
    m.mean.assign(static_cast<std::size_t>(f.d), 0.0);
    CMapMat X(f.rows.data(), f.n, f.d);
    Eigen::VectorXd mu = X.colwise().mean();
    RowMat centered = X.rowwise() - mu.transpose();
    RowMat cov = (centered.transpose() * centered) / static_cast<double>(f.n - 1);
    for (int i = 0; i < f.d; ++i) m.mean[static_cast<std::size_t>(i)] = mu(i);
    m.cov.assign(cov.data(), cov.data() + static_cast<std::size_t>(f.d) * f.d);
    return m;
}

double fid_from_moments(const GaussianMoments& a, const GaussianMoments& b) {
    if (a.d != b.d || a.d < 1) throw ShapeError("fid: moment dimensions differ");
    const int d = a.d;
    CMapMat Sa(a.cov.data(), d, d);
    CMapMat Sb(b.cov.data(), d, d);
    double mean_term = 0;
    for (int i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
        mean_term += diff * diff;
    }
    RowMat prod = Sa * Sb;
    RowMat sym = 0.5 * (prod + prod.transpose());
    Eigen::SelfAdjointEigenSolver<RowMat> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    double root_trace = 0;
    for (int i = 0; i < d; ++i) root_trace += std::sqrt(std::max(eig.eigenvalues()(i), 0.0));
    const double value = mean_term + Sa.trace() + Sb.trace() - 2.0 * root_trace;
    if (value < -1e-6) throw NumericError("fid: value below numerical floor");
    return std::max(value, 0.0);
}

double fid(const FeatureSet& a, const FeatureSet& b) {
    if (a.d != b.d) throw ShapeError("fid: feature dimensions differ");
    return fid_from_moments(feature_moments(a), feature_moments(b));
}

double kid(const FeatureSet& a, const FeatureSet& b) {
    a.validate();
    b.validate();
    if (a.d != b.d) throw ShapeError("kid: feature dimensions differ");
    const int d = a.d;
    CMapMat A(a.rows.data(), a.n, d);
    CMapMat B(b.rows.data(), b.n, d);
    auto poly3 = [d](RowMat m) {
        m = (m / static_cast<double>(d)).array() + 1.0;
        return RowMat((m.array() * m.array() * m.array()).matrix());
    };
    const RowMat kaa = poly3(A * A.transpose());
    const RowMat kbb = poly3(B * B.transpose());
    const RowMat kab = poly3(A * B.transpose());
    const double sum_aa = kaa.sum() - kaa.trace();
    const double sum_bb = kbb.sum() - kbb.trace();
    const double m = a.n, nn = b.n;
    return sum_aa / (m * (m - 1)) + sum_bb / (nn * (nn - 1)) - 2.0 * kab.mean();
}

}  // namespace bitstain::eval
