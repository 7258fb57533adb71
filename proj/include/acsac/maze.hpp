#pragma once
// Continuous point maze: axis-aligned wall rectangles inside a square
// workspace, sparse reward (0 at the goal ball, -1 otherwise), motion
// segment-clipped so a step stops at the first wall contact.
#include <array>
#include <vector>

namespace acsac {

struct Rect {
  double x0, y0, x1, y1;
  bool inside_open(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
};

struct MazeSpec {
  double xmin = 0, ymin = 0, xmax = 8, ymax = 8;
  std::vector<Rect> walls;
  std::array<double, 2> start{0.5, 0.5};
  std::array<double, 2> goal{7.5, 7.5};
  double goal_radius = 0.5;
  double action_bound = 1.0;
  int max_steps = 200;
  // inner corner of the corridor; anchors the turn region used by analysis
  std::array<double, 2> corner{2.0, 6.0};
  double turn_chebyshev = 1.5;

  // One 90-degree turn: a vertical leg (x in [0,2]) up the left side joining
  // a horizontal leg (y in [6,8]) along the top. Corridor width 2.
  static MazeSpec lmaze() {
    MazeSpec m;
    m.walls = {{2.0, 0.0, 8.0, 6.0}};
    return m;
  }

  bool in_free_space(double x, double y) const {
    if (x < xmin || x > xmax || y < ymin || y > ymax) return false;
    for (const Rect& w : walls)
      if (w.inside_open(x, y)) return false;
    return true;
  }

  bool in_turn_region(double x, double y) const {
    double dx = x - corner[0], dy = y - corner[1];
    double cheb = std::max(dx < 0 ? -dx : dx, dy < 0 ? -dy : dy);
    return cheb <= turn_chebyshev;
  }
};

struct StepOut {
  std::array<double, 2> next;
  double reward;
  bool done;
};

// Clips the action to the per-dimension bound, advances along the segment
// until the first wall/workspace contact, then scores against the goal ball.
StepOut env_step(const MazeSpec& env, const double* state, const double* action);

}  // namespace acsac
