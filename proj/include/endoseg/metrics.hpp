#pragma once

#include "endoseg/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace endoseg {

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int support = 0;  // true instances
};

struct F1Result {
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    std::vector<ClassScores> per_class;
};

// Any 0/0 ratio counts as 0. Macro is the unweighted class mean over all n_classes.
F1Result f1_scores(std::span<const int> y_true, std::span<const int> y_pred, int n_classes);

// |A and B| / |A or B|; two empty masks give 1.
double iou(const BinaryMask& a, const BinaryMask& b);

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

// 8-connected components of the foreground, ordered by first pixel in raster order.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

struct DetectionImage {
    std::string image_id;
    BinaryMask gt;                         // may be empty (no polyp)
    std::vector<BinaryMask> predictions;  // one per predicted object
};

// Splits a predicted pixel mask into one prediction per connected component.
DetectionImage detection_image(std::string image_id, BinaryMask gt, const BinaryMask& predicted);

struct DetectionImageResult {
    std::string image_id;
    int n_predictions = 0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double iou = 0.0;  // union of predictions against the ground truth
};

struct DetectionReport {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mean_iou = 0.0;
    double threshold = 0.3;
    std::vector<DetectionImageResult> per_image;
};

/// Each predicted mask is a TP when its IoU with the image's ground truth is
/// at least `threshold` and an FP otherwise; a non-empty ground truth with no
/// TP is one FN. mean_iou averages the per-image IoU of the predictions' union.
DetectionReport polyp_detection_report(std::span<const DetectionImage> images, double threshold = 0.3);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace endoseg
