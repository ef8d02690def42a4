#pragma once

// Metrics: PSNR, Gaussian Frechet distance over pluggable embeddings,
// identity-proxy cosine similarity, and cumulative rotation-binned reports.

#include <functional>
#include <string>
#include <vector>

#include "jumpcut/geometry.hpp"
#include "jumpcut/image.hpp"

namespace jcut::eval {

// 10*log10(1/MSE) over all channels, images in [0,1]; capped at 99 dB when
// MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// same formula over double-precision pixel buffers
double psnr(const std::vector<double>& a, const std::vector<double>& b);

using Embedder = std::function<std::vector<double>(const Image&)>;

// 16x16 grayscale downsample, flattened and mean-centered per image.
std::vector<double> grayscale16_embedding(const Image& img);

// Crop the bounding box of the visible head-part keypoints (with a small
// margin) for identity embedding; falls back to the full frame when the head
// is entirely invisible.
Image crop_head(const Image& img, const KeypointSet& kps);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

double identity_similarity(const Image& a, const Image& b, const Embedder& embedder);

struct FeatureStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // row-major d x d, unbiased
    int64_t dim = 0;
};

FeatureStats feature_stats(const std::vector<Image>& images, const Embedder& embedder);

// Squared Gaussian Frechet distance
//   |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).
// Covariances must be symmetric PSD up to a -1e-8 eigenvalue tolerance.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct EvalSample {
    std::string method;
    double yaw_delta = 0;  // absolute ground-truth rotation of the cut
    double psnr = 0;
    double identity = 0;
};

struct ReportRow {
    std::string method;
    std::string bin;  // "all", "ge15", "ge30", "ge45", "ge60"
    double psnr = 0;
    double identity = 0;
    int count = 0;
};

// Cumulative bins (>=15/30/45/60 degrees) plus "all", per method; empty bins
// are omitted.
std::vector<ReportRow> rotation_binned_report(const std::vector<EvalSample>& samples);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);

}  // namespace jcut::eval
