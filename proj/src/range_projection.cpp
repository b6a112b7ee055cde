#include "ppseg/range_projection.hpp"

#include <cmath>
#include <limits>

namespace ppseg {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ProjectionConfig ProjectionConfig::from_degrees(int h, int w, double up_deg, double down_deg) {
    ProjectionConfig cfg;
    cfg.height = h;
    cfg.width = w;
    cfg.fov_up = up_deg * kPi / 180.0;
    cfg.fov_down = down_deg * kPi / 180.0;
    cfg.validate();
    return cfg;
}

void ProjectionConfig::validate() const {
    if (height <= 0 || width <= 0) throw ConfigError("projection: H and W must be positive");
    if (!(fov_up > fov_down)) throw ConfigError("projection: fov_up must exceed fov_down");
}

bool project_point(double x, double y, double z, const ProjectionConfig& cfg, int& v, int& u) {
    const double r = std::sqrt(x * x + y * y + z * z);
    if (r == 0.0) return false;
    const double yaw = std::atan2(y, x);
    const double pitch = std::asin(z / r);
    double uf = 0.5 * (1.0 - yaw / kPi) * cfg.width;
    double vf = (1.0 - (pitch - cfg.fov_down) / (cfg.fov_up - cfg.fov_down)) * cfg.height;
    int ui = static_cast<int>(std::floor(uf));
    int vi = static_cast<int>(std::floor(vf));
    u = std::min(std::max(ui, 0), cfg.width - 1);
    v = std::min(std::max(vi, 0), cfg.height - 1);
    return true;
}

RangeImage project(const PointCloud& cloud, const ProjectionConfig& cfg) {
    cfg.validate();
    RangeImage img;
    img.h = cfg.height;
    img.w = cfg.width;
    const int64_t npix = img.pixels();
    img.channels = Tensor::zeros({img.h, img.w, 5});
    img.valid.assign(static_cast<size_t>(npix), 0);
    img.pix2pt.assign(static_cast<size_t>(npix), -1);
    img.pt2pix.assign(static_cast<size_t>(cloud.n()), -1);

    std::vector<double> best_range(static_cast<size_t>(npix),
                                   std::numeric_limits<double>::infinity());
    double* ch = img.channels.data();
    for (int64_t i = 0; i < cloud.n(); ++i) {
        const double x = cloud.x[static_cast<size_t>(i)];
        const double y = cloud.y[static_cast<size_t>(i)];
        const double z = cloud.z[static_cast<size_t>(i)];
        int v, u;
        if (!project_point(x, y, z, cfg, v, u)) {
            ++img.skipped;
            continue;
        }
        const int64_t pix = static_cast<int64_t>(v) * img.w + u;
        img.pt2pix[static_cast<size_t>(i)] = static_cast<int32_t>(pix);
        const double r = std::sqrt(x * x + y * y + z * z);
        if (r < best_range[static_cast<size_t>(pix)]) { // nearest point wins the pixel
            best_range[static_cast<size_t>(pix)] = r;
            img.valid[static_cast<size_t>(pix)] = 1;
            img.pix2pt[static_cast<size_t>(pix)] = static_cast<int32_t>(i);
            double* px = ch + pix * 5;
            px[0] = x;
            px[1] = y;
            px[2] = z;
            px[3] = r;
            px[4] = cloud.remission[static_cast<size_t>(i)];
        }
    }
    return img;
}

std::vector<int32_t> unproject(const RangeImage& image, const std::vector<int32_t>& pixel_pred) {
    if (static_cast<int64_t>(pixel_pred.size()) != image.pixels()) {
        throw DimensionError("unproject: got " + std::to_string(pixel_pred.size()) +
                             " pixel predictions for " + std::to_string(image.pixels()) +
                             " pixels");
    }
    std::vector<int32_t> out(image.pt2pix.size(), kIgnoreClass);
    for (size_t i = 0; i < image.pt2pix.size(); ++i) {
        const int32_t pix = image.pt2pix[i];
        if (pix >= 0) out[i] = pixel_pred[static_cast<size_t>(pix)];
    }
    return out;
}

std::vector<int32_t> pixel_labels(const RangeImage& image, const PointCloud& cloud) {
    std::vector<int32_t> out(static_cast<size_t>(image.pixels()), kIgnoreClass);
    if (!cloud.has_labels()) return out;
    for (int64_t pix = 0; pix < image.pixels(); ++pix) {
        const int32_t pt = image.pix2pt[static_cast<size_t>(pix)];
        if (pt >= 0) out[static_cast<size_t>(pix)] = cloud.label[static_cast<size_t>(pt)];
    }
    return out;
}

} // namespace ppseg
