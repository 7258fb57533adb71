#include "acsac/maze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace acsac {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// First t in [0,1] at which p + t*d enters the open interior of r, or +inf.
double entry_time(double px, double py, double dx, double dy, const Rect& r) {
  double tin = -kInf, tout = kInf;
  // x slab
  if (dx == 0.0) {
    if (!(px > r.x0 && px < r.x1)) return kInf;
  } else {
    double ta = (r.x0 - px) / dx, tb = (r.x1 - px) / dx;
    tin = std::max(tin, std::min(ta, tb));
    tout = std::min(tout, std::max(ta, tb));
  }
  // y slab
  if (dy == 0.0) {
    if (!(py > r.y0 && py < r.y1)) return kInf;
  } else {
    double ta = (r.y0 - py) / dy, tb = (r.y1 - py) / dy;
    tin = std::max(tin, std::min(ta, tb));
    tout = std::min(tout, std::max(ta, tb));
  }
  if (tin >= tout) return kInf;   // misses or only grazes a corner
  if (tout <= 0.0 || tin >= 1.0) return kInf;
  return std::max(tin, 0.0);
}

}  // namespace

StepOut env_step(const MazeSpec& env, const double* state, const double* action) {
  const double b = env.action_bound;
  double dx = std::clamp(action[0], -b, b);
  double dy = std::clamp(action[1], -b, b);
  double px = state[0], py = state[1];

  double t = 1.0;
  // workspace boundary acts like a wall seen from inside
  if (dx > 0) t = std::min(t, (env.xmax - px) / dx);
  if (dx < 0) t = std::min(t, (env.xmin - px) / dx);
  if (dy > 0) t = std::min(t, (env.ymax - py) / dy);
  if (dy < 0) t = std::min(t, (env.ymin - py) / dy);
  for (const Rect& w : env.walls) t = std::min(t, entry_time(px, py, dx, dy, w));
  t = std::max(t, 0.0);

  double nx = px + t * dx, ny = py + t * dy;
  nx = std::clamp(nx, env.xmin, env.xmax);
  ny = std::clamp(ny, env.ymin, env.ymax);
  // rounding can land a hair inside a wall; snap to the nearest face
  for (const Rect& w : env.walls) {
    if (w.inside_open(nx, ny)) {
      double cx0 = nx - w.x0, cx1 = w.x1 - nx, cy0 = ny - w.y0, cy1 = w.y1 - ny;
      double m = std::min({cx0, cx1, cy0, cy1});
      if (m == cx0) nx = w.x0;
      else if (m == cx1) nx = w.x1;
      else if (m == cy0) ny = w.y0;
      else ny = w.y1;
    }
  }

  double gx = nx - env.goal[0], gy = ny - env.goal[1];
  bool done = gx * gx + gy * gy <= env.goal_radius * env.goal_radius;
  return {{nx, ny}, done ? 0.0 : -1.0, done};
}

}  // namespace acsac
