"""Desk-scale driving world: procedural tracks, two season render themes,
a pinhole camera, a kinematic bicycle vehicle, a pure-pursuit expert, and
open/closed-loop episode machinery.

Sign conventions used throughout (and by every consumer of this package):

* positive curvature, steering and bearing mean a RIGHT turn;
* the lateral offset ``d`` is positive when the vehicle sits LEFT of the
  centerline (so a positive, rightward-correcting command recenters it);
* headings are radians in the plan frame, consistent with the above
  (geometrically a y-down plan frame, where ``heading += v * curvature * dt``).
"""

from .track import Track, generate_track  # noqa: F401
from .vehicle import (  # noqa: F401
    VehicleConfig,
    VehicleState,
    curvature_to_steering,
    place_on_track,
    vehicle_step,
)
from .expert import ExpertDriver, expert_label  # noqa: F401
from .render import render_frame  # noqa: F401
from .imaging import add_gaussian_noise, augment  # noqa: F401
from .episodes import (  # noqa: F401
    Episode,
    EpisodeData,
    generate_dataset,
    load_dataset,
    run_closed_loop,
    run_closed_loop_batch,
    save_dataset,
)
