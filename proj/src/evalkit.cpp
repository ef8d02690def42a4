#include "jumpcut/evalkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

namespace jcut::eval {

namespace {

double psnr_from_mse(double mse) {
    if (mse < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw InvalidInput("psnr: image shapes differ");
    double mse = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    return psnr_from_mse(mse / static_cast<double>(a.data.size()));
}

double psnr(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw InvalidInput("psnr: buffer sizes differ");
    double mse = 0;
    for (size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    return psnr_from_mse(mse / static_cast<double>(a.size()));
}

std::vector<double> grayscale16_embedding(const Image& img) {
    const Image small = resize_image(img, 16, 16);
    std::vector<double> e(256);
    double mean = 0;
    for (int i = 0; i < 256; ++i) {
        const double g =
            (small.data[i] + small.data[256 + i] + small.data[512 + i]) / 3.0;
        e[i] = g;
        mean += g / 256.0;
    }
    for (double& v : e) v -= mean;
    return e;
}

Image crop_head(const Image& img, const KeypointSet& kps) {
    float x0 = 1e30f, y0 = 1e30f, x1 = -1e30f, y1 = -1e30f;
    for (int i = 0; i < kps.num_slots(); ++i) {
        if (!kps.slots[i].visible || kps.slot_part(i) != 2) continue;
        x0 = std::min(x0, kps.slots[i].x);
        y0 = std::min(y0, kps.slots[i].y);
        x1 = std::max(x1, kps.slots[i].x);
        y1 = std::max(y1, kps.slots[i].y);
    }
    if (x1 < x0) return img;  // no visible head keypoints
    const int margin = std::max(1, img.height / 16);
    const int cx0 = std::clamp(static_cast<int>(std::floor(x0)) - margin, 0, img.width - 1);
    const int cy0 = std::clamp(static_cast<int>(std::floor(y0)) - margin, 0, img.height - 1);
    const int cx1 = std::clamp(static_cast<int>(std::ceil(x1)) + margin, cx0 + 1, img.width);
    const int cy1 = std::clamp(static_cast<int>(std::ceil(y1)) + margin, cy0 + 1, img.height);
    Image out(cx1 - cx0, cy1 - cy0);
    for (int c = 0; c < 3; ++c)
        for (int y = cy0; y < cy1; ++y)
            for (int x = cx0; x < cx1; ++x)
                out.at(c, x - cx0, y - cy0) = img.at(c, x, y);
    return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidInput("cosine_similarity: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) throw DomainError("cosine_similarity: zero-norm embedding");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double identity_similarity(const Image& a, const Image& b, const Embedder& embedder) {
    return cosine_similarity(embedder(a), embedder(b));
}

FeatureStats feature_stats(const std::vector<Image>& images, const Embedder& embedder) {
    if (images.size() < 2) throw InvalidInput("feature_stats: need at least 2 images");
    std::vector<std::vector<double>> emb;
    emb.reserve(images.size());
    for (const auto& img : images) emb.push_back(embedder(img));
    const int64_t d = static_cast<int64_t>(emb[0].size());
    const int64_t n = static_cast<int64_t>(emb.size());
    FeatureStats st;
    st.dim = d;
    st.mu.assign(d, 0.0);
    for (const auto& e : emb) {
        if (static_cast<int64_t>(e.size()) != d)
            throw InvalidInput("feature_stats: embedding dims differ");
        for (int64_t i = 0; i < d; ++i) st.mu[i] += e[i] / static_cast<double>(n);
    }
    st.sigma.assign(d * d, 0.0);
    for (const auto& e : emb)
        for (int64_t i = 0; i < d; ++i)
            for (int64_t j = 0; j < d; ++j)
                st.sigma[i * d + j] += (e[i] - st.mu[i]) * (e[j] - st.mu[j]) /
                                       static_cast<double>(n - 1);
    return st;
}

namespace {

Eigen::MatrixXd to_eigen(const std::vector<double>& m, int64_t d) {
    Eigen::MatrixXd out(d, d);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) out(i, j) = m[i * d + j];
    return out;
}

// PSD square root via symmetric eigendecomposition; eigenvalues below the
// -1e-8 tolerance reject the input, small negatives clamp to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-8)
            throw DomainError(std::string("frechet_distance: ") + what +
                              " is not positive semi-definite");
        ev(i) = std::sqrt(std::max(0.0, ev(i)));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim != b.dim) throw InvalidInput("frechet_distance: dimension mismatch");
    const int64_t d = a.dim;
    double mean_term = 0;
    for (int64_t i = 0; i < d; ++i) {
        const double diff = a.mu[i] - b.mu[i];
        mean_term += diff * diff;
    }
    const Eigen::MatrixXd s1 = to_eigen(a.sigma, d);
    const Eigen::MatrixXd s2 = to_eigen(b.sigma, d);
    const Eigen::MatrixXd r1 = psd_sqrt(s1, "first covariance");
    // sqrt(S1 S2) has the trace of sqrt(S1^1/2 S2 S1^1/2), which is symmetric
    const Eigen::MatrixXd inner = psd_sqrt(r1 * s2 * r1, "second covariance");
    const double trace_term = s1.trace() + s2.trace() - 2.0 * inner.trace();
    return mean_term + trace_term;
}

std::vector<ReportRow> rotation_binned_report(const std::vector<EvalSample>& samples) {
    static const std::vector<std::pair<std::string, double>> bins = {
        {"all", 0.0}, {"ge15", 15.0}, {"ge30", 30.0}, {"ge45", 45.0}, {"ge60", 60.0}};
    std::map<std::string, std::vector<const EvalSample*>> by_method;
    std::vector<std::string> method_order;
    for (const auto& s : samples) {
        if (!by_method.count(s.method)) method_order.push_back(s.method);
        by_method[s.method].push_back(&s);
    }
    std::vector<ReportRow> rows;
    for (const auto& method : method_order) {
        for (const auto& [bin_name, threshold] : bins) {
            ReportRow row;
            row.method = method;
            row.bin = bin_name;
            for (const auto* s : by_method[method]) {
                if (std::abs(s->yaw_delta) < threshold) continue;
                row.psnr += s->psnr;
                row.identity += s->identity;
                ++row.count;
            }
            if (row.count == 0) continue;
            row.psnr /= row.count;
            row.identity /= row.count;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "method,bin,psnr,identity,count\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%s,%s,%.6f,%.6f,%d\n", r.method.c_str(), r.bin.c_str(),
                      r.psnr, r.identity, r.count);
        out += line;
    }
    return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"method", r.method},
                     {"bin", r.bin},
                     {"psnr", r.psnr},
                     {"identity", r.identity},
                     {"count", r.count}});
    return j.dump(2) + "\n";
}

}  // namespace jcut::eval
