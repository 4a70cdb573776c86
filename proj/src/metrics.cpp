#include "endoseg/metrics.hpp"

#include "endoseg/error.hpp"

#include <map>
#include <utility>

namespace endoseg {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void check_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw DataError(std::string(what) + ": mask shapes differ (" + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                        ")");
    }
}

}  // namespace

F1Result f1_scores(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
    if (y_true.size() != y_pred.size()) {
        throw DataError("f1: " + std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) +
                        " predictions");
    }
    if (n_classes < 1) throw DataError("f1: need at least one class");
    std::vector<long long> tp(static_cast<std::size_t>(n_classes)), fp(tp.size()), fn(tp.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) throw DataError("f1: label out of range");
        if (t == p) {
            ++tp[static_cast<std::size_t>(t)];
        } else {
            ++fp[static_cast<std::size_t>(p)];
            ++fn[static_cast<std::size_t>(t)];
        }
    }
    F1Result r;
    long long all_tp = 0, all_fp = 0, all_fn = 0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        ClassScores s;
        s.precision = ratio(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fp[c]));
        s.recall = ratio(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fn[c]));
        s.f1 = ratio(2.0 * static_cast<double>(tp[c]), static_cast<double>(2 * tp[c] + fp[c] + fn[c]));
        s.support = static_cast<int>(tp[c] + fn[c]);
        r.macro_f1 += s.f1;
        r.per_class.push_back(s);
        all_tp += tp[c];
        all_fp += fp[c];
        all_fn += fn[c];
    }
    r.macro_f1 /= n_classes;
    r.micro_f1 = ratio(2.0 * static_cast<double>(all_tp), static_cast<double>(2 * all_tp + all_fp + all_fn));
    return r;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] != 0;
        const bool y = b.data[i] != 0;
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "union");
    BinaryMask out(a.height, a.width);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = (a.data[i] || b.data[i]) ? 1 : 0;
    return out;
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
    std::vector<int> label(mask.data.size(), -1);
    std::vector<BinaryMask> out;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * mask.width + c;
            if (!mask.data[idx] || label[idx] >= 0) continue;
            const int id = static_cast<int>(out.size());
            out.emplace_back(mask.height, mask.width);
            BinaryMask& comp = out.back();
            label[idx] = id;
            stack.assign(1, {r, c});
            while (!stack.empty()) {
                const auto [y, x] = stack.back();
                stack.pop_back();
                comp.at(y, x) = 1;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy;
                        const int nx = x + dx;
                        if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * mask.width + nx;
                        if (mask.data[n] && label[n] < 0) {
                            label[n] = id;
                            stack.emplace_back(ny, nx);
                        }
                    }
                }
            }
        }
    }
    return out;
}

DetectionImage detection_image(std::string image_id, BinaryMask gt, const BinaryMask& predicted) {
    check_same_shape(gt, predicted, "detection");
    DetectionImage d{std::move(image_id), std::move(gt), connected_components(predicted)};
    return d;
}

DetectionReport polyp_detection_report(std::span<const DetectionImage> images, double threshold) {
    DetectionReport rep;
    rep.threshold = threshold;
    double iou_sum = 0.0;
    for (const auto& img : images) {
        DetectionImageResult res;
        res.image_id = img.image_id;
        res.n_predictions = static_cast<int>(img.predictions.size());
        BinaryMask all(img.gt.height, img.gt.width);
        for (const auto& p : img.predictions) {
            check_same_shape(img.gt, p, img.image_id.c_str());
            if (iou(p, img.gt) >= threshold && !img.gt.empty_mask()) {
                ++res.tp;
            } else {
                ++res.fp;
            }
            all = mask_union(all, p);
        }
        if (!img.gt.empty_mask() && res.tp == 0) res.fn = 1;
        res.iou = iou(all, img.gt);
        iou_sum += res.iou;
        rep.tp += res.tp;
        rep.fp += res.fp;
        rep.fn += res.fn;
        rep.per_image.push_back(std::move(res));
    }
    rep.precision = ratio(rep.tp, rep.tp + rep.fp);
    rep.recall = ratio(rep.tp, rep.tp + rep.fn);
    rep.f1 = ratio(2.0 * rep.tp, 2.0 * rep.tp + rep.fp + rep.fn);
    rep.mean_iou = images.empty() ? 0.0 : iou_sum / static_cast<double>(images.size());
    return rep;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw DataError("ari: labelings differ in length");
    const auto n = static_cast<double>(a.size());
    if (a.size() < 2) return 1.0;
    std::map<std::pair<int, int>, long long> joint;
    std::map<int, long long> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [k, v] : joint) index += c2(static_cast<double>(v));
    for (const auto& [k, v] : ca) sa += c2(static_cast<double>(v));
    for (const auto& [k, v] : cb) sb += c2(static_cast<double>(v));
    const double expected = sa * sb / c2(n);
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

}  // namespace endoseg
