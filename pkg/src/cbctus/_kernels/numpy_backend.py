"""Pure-numpy point classification kernel.

Classifies 3D points against the packed phantom primitives.  Labels follow
the priority rib > lesion > tube wall > lumen > water; points outside the
tank are background.  Mirrors cbctus._kernels._native exactly.
"""

import numpy as np

BACKGROUND = 0
WATER = 1
LUMEN = 2
WALL = 3
LESION = 4
RIB = 5


def classify(points, tube_starts, tube_dirs, tube_lengths, tube_r_in,
             tube_r_out, tube_flow, sphere, boxes, tank):
    """Label an (N, 3) point array.

    sphere is (cx, cy, cz, r); boxes is (B, 6) min/max corners; tank is
    (6,) min/max corners.  Returns (labels uint8, flow uint8) where flow
    marks points inside the lumen of a flowing tube.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    n = pts.shape[0]
    labels = np.full(n, WATER, dtype=np.uint8)

    lumen = np.zeros(n, dtype=bool)
    wall = np.zeros(n, dtype=bool)
    flow = np.zeros(n, dtype=bool)
    for k in range(tube_starts.shape[0]):
        rel = pts - tube_starts[k]
        t = rel @ tube_dirs[k]
        radial2 = np.einsum("ij,ij->i", rel, rel) - t * t
        axial = (t >= 0.0) & (t <= tube_lengths[k])
        in_lumen = axial & (radial2 <= tube_r_in[k] ** 2)
        in_wall = axial & ~in_lumen & (radial2 <= tube_r_out[k] ** 2)
        lumen |= in_lumen
        wall |= in_wall
        if tube_flow[k]:
            flow |= in_lumen

    rel = pts - sphere[:3]
    lesion = np.einsum("ij,ij->i", rel, rel) <= sphere[3] ** 2

    rib = np.zeros(n, dtype=bool)
    for b in range(boxes.shape[0]):
        rib |= np.all((pts >= boxes[b, :3]) & (pts <= boxes[b, 3:]), axis=1)

    labels[lumen] = LUMEN
    labels[wall] = WALL
    labels[lesion] = LESION
    labels[rib] = RIB

    outside = ~np.all((pts >= tank[:3]) & (pts <= tank[3:]), axis=1)
    labels[outside] = BACKGROUND

    flow &= labels == LUMEN
    return labels, flow.astype(np.uint8)
