# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled point classification kernel (hot inner loop of voxelization and
US frame rendering).  Semantics identical to numpy_backend.classify."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF BACKGROUND = 0
DEF WATER = 1
DEF LUMEN = 2
DEF WALL = 3
DEF LESION = 4
DEF RIB = 5


def classify(double[:, ::1] points,
             double[:, ::1] tube_starts,
             double[:, ::1] tube_dirs,
             double[::1] tube_lengths,
             double[::1] tube_r_in,
             double[::1] tube_r_out,
             unsigned char[::1] tube_flow,
             double[::1] sphere,
             double[:, ::1] boxes,
             double[::1] tank):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t n_tubes = tube_starts.shape[0]
    cdef Py_ssize_t n_boxes = boxes.shape[0]

    labels_arr = np.empty(n, dtype=np.uint8)
    flow_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] labels = labels_arr
    cdef unsigned char[::1] flow = flow_arr

    cdef Py_ssize_t i, k, b
    cdef double px, py, pz, rx, ry, rz, t, radial2, d2
    cdef unsigned char lab, fl
    cdef bint inside, in_lumen, in_wall

    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]

        in_lumen = False
        in_wall = False
        fl = 0
        for k in range(n_tubes):
            rx = px - tube_starts[k, 0]
            ry = py - tube_starts[k, 1]
            rz = pz - tube_starts[k, 2]
            t = rx * tube_dirs[k, 0] + ry * tube_dirs[k, 1] + rz * tube_dirs[k, 2]
            if t < 0.0 or t > tube_lengths[k]:
                continue
            radial2 = rx * rx + ry * ry + rz * rz - t * t
            if radial2 <= tube_r_in[k] * tube_r_in[k]:
                in_lumen = True
                if tube_flow[k]:
                    fl = 1
            elif radial2 <= tube_r_out[k] * tube_r_out[k]:
                in_wall = True

        if in_wall:
            lab = WALL
            fl = 0
        elif in_lumen:
            lab = LUMEN
        else:
            lab = WATER
            fl = 0

        rx = px - sphere[0]
        ry = py - sphere[1]
        rz = pz - sphere[2]
        d2 = rx * rx + ry * ry + rz * rz
        if d2 <= sphere[3] * sphere[3]:
            lab = LESION
            fl = 0

        for b in range(n_boxes):
            inside = (boxes[b, 0] <= px <= boxes[b, 3]
                      and boxes[b, 1] <= py <= boxes[b, 4]
                      and boxes[b, 2] <= pz <= boxes[b, 5])
            if inside:
                lab = RIB
                fl = 0
                break

        inside = (tank[0] <= px <= tank[3]
                  and tank[1] <= py <= tank[4]
                  and tank[2] <= pz <= tank[5])
        if not inside:
            lab = BACKGROUND
            fl = 0

        labels[i] = lab
        flow[i] = fl

    return labels_arr, flow_arr
