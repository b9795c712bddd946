#include "sim2seg/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <tuple>

namespace sim2seg::postproc {
namespace {

constexpr double kInf = 1e20;

/// 1-D squared distance transform of sampled function f (lower envelope of
/// parabolas).
void dt1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = 0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      if (s <= z[k]) {
        // k == 0 and the new parabola dominates from -inf.
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        k = 0;
        goto next;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  next:;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::string PostprocSpec::check() const {
  if (binarize_threshold < 0 || binarize_threshold > 255) return "postproc.binarize_threshold must lie in [0,255]";
  if (marker_min_distance < 1) return "postproc.marker_min_distance must be >= 1";
  if (min_instance_area < 0) return "postproc.min_instance_area must be >= 0";
  return {};
}

BinaryMap binarize(const ImageBuffer& gray, int threshold) {
  if (gray.channels() != 1) throw Error(ErrorKind::kShape, "binarize expects a single channel");
  BinaryMap out{gray.width(), gray.height(), {}};
  out.fg.resize(static_cast<std::size_t>(gray.width()) * gray.height());
  for (std::size_t i = 0; i < out.fg.size(); ++i) {
    out.fg[i] = gray.data()[static_cast<Eigen::Index>(i)] >= static_cast<float>(threshold) ? 1 : 0;
  }
  return out;
}

Eigen::ArrayXXd squared_distance_transform(const BinaryMap& b) {
  // One pixel of background padding makes the image border count as background.
  const int w = b.width + 2;
  const int h = b.height + 2;
  Eigen::ArrayXXd grid = Eigen::ArrayXXd::Zero(h, w);
  for (int y = 0; y < b.height; ++y)
    for (int x = 0; x < b.width; ++x)
      if (b.at(x, y)) grid(y + 1, x + 1) = kInf;

  std::vector<double> f, d;
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid(y, x);
    dt1d(f, d);
    for (int y = 0; y < h; ++y) grid(y, x) = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid(y, x);
    dt1d(f, d);
    for (int x = 0; x < w; ++x) grid(y, x) = d[x];
  }
  return grid.block(1, 1, b.height, b.width);
}

InstanceMask connected_components(const BinaryMap& b) {
  InstanceMask out(b.width, b.height);
  InstanceMask::Id next = 0;
  std::vector<int> stack;
  for (int start = 0; start < b.width * b.height; ++start) {
    if (!b.fg[start] || out[start] != 0) continue;
    ++next;
    out[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int x = p % b.width;
      const int y = p / b.width;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= b.width || q[1] >= b.height) continue;
        const int qi = q[1] * b.width + q[0];
        if (b.fg[qi] && out[qi] == 0) {
          out[qi] = next;
          stack.push_back(qi);
        }
      }
    }
  }
  return out;
}

InstanceMask filter_and_relabel(const InstanceMask& mask, int min_area) {
  std::map<InstanceMask::Id, int> area;
  for (auto id : mask.ids()) {
    if (id != 0) ++area[id];
  }
  std::map<InstanceMask::Id, InstanceMask::Id> remap;
  InstanceMask out(mask.width(), mask.height());
  InstanceMask::Id next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto id = mask[i];
    if (id == 0 || area[id] < min_area) continue;
    auto it = remap.find(id);
    if (it == remap.end()) it = remap.emplace(id, ++next).first;
    out[i] = it->second;
  }
  return out;
}

InstanceMask watershed_instances(const BinaryMap& b, const PostprocSpec& spec) {
  if (const auto bad = spec.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  const int w = b.width;
  const int h = b.height;
  const int n = w * h;
  const Eigen::ArrayXXd dist = squared_distance_transform(b);
  const InstanceMask components = connected_components(b);
  auto value = [&](int i) { return dist(i / w, i % w); };

  // Regional maxima: 8-connected plateaus with no strictly higher neighbour,
  // both restricted to one 4-connected component so every component gets a marker.
  struct Peak {
    double value;
    int first;  // smallest raster index in the plateau
    double cx, cy;
    InstanceMask::Id component;
    std::vector<int> pixels;
  };
  std::vector<Peak> peaks;
  std::vector<int> plateau_id(n, -1);
  std::vector<int> stack;
  for (int start = 0; start < n; ++start) {
    if (!b.fg[start] || plateau_id[start] != -1) continue;
    const double v = value(start);
    Peak peak{v, start, 0, 0, components[start], {}};
    bool is_max = true;
    plateau_id[start] = start;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      peak.pixels.push_back(p);
      const int x = p % w;
      const int y = p / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int qx = x + dx, qy = y + dy;
          if ((dx == 0 && dy == 0) || qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          const int q = qy * w + qx;
          if (components[q] != components[start]) continue;
          const double qv = value(q);
          if (qv > v) is_max = false;
          if (qv == v && plateau_id[q] == -1) {
            plateau_id[q] = start;
            stack.push_back(q);
          }
        }
      }
    }
    if (!is_max) continue;
    for (int p : peak.pixels) {
      peak.cx += p % w;
      peak.cy += p / w;
    }
    peak.cx /= static_cast<double>(peak.pixels.size());
    peak.cy /= static_cast<double>(peak.pixels.size());
    peaks.push_back(std::move(peak));
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return std::tie(b.value, a.first) < std::tie(a.value, b.first);
  });

  // Suppress maxima closer than marker_min_distance to a stronger one in the
  // same connected component.
  InstanceMask labels(w, h);
  std::vector<const Peak*> kept;
  const double min_d = spec.marker_min_distance;
  using Entry = std::tuple<double, int>;  // (-distance, raster index)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  InstanceMask::Id next = 0;
  for (const auto& peak : peaks) {
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const Peak* k) {
      return k->component == peak.component &&
             std::hypot(k->cx - peak.cx, k->cy - peak.cy) < min_d;
    });
    if (near) continue;
    kept.push_back(&peak);
    ++next;
    for (int p : peak.pixels) {
      labels[p] = next;
      queue.emplace(-value(p), p);
    }
  }

  // Priority flood, highest distance first, ties in raster order.
  while (!queue.empty()) {
    const int p = std::get<1>(queue.top());
    queue.pop();
    const int x = p % w;
    const int y = p / w;
    const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (const auto& q : nbr) {
      if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
      const int qi = q[1] * w + q[0];
      if (!b.fg[qi] || labels[qi] != 0) continue;
      labels[qi] = labels[p];
      queue.emplace(-value(qi), qi);
    }
  }
  return filter_and_relabel(labels, spec.min_instance_area);
}

InstanceMask watershed_instances(const ImageBuffer& gray, const PostprocSpec& spec) {
  return watershed_instances(binarize(gray, spec.binarize_threshold), spec);
}

InstanceMask extract_instances(const ImageBuffer& gray, const PostprocSpec& spec) {
  if (spec.mode == Mode::kWatershed) return watershed_instances(gray, spec);
  if (const auto bad = spec.check(); !bad.empty()) throw Error(ErrorKind::kConfig, bad);
  return filter_and_relabel(connected_components(binarize(gray, spec.binarize_threshold)),
                            spec.min_instance_area);
}

}  // namespace sim2seg::postproc
