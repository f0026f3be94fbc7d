#pragma once

#include "xgen/mesh_io.hpp"

namespace xgen::shapes {

// Parametric primitives used as fixtures and demo inputs. All are centered at
// the origin; the closed ones are watertight with outward orientation.

TriangleMesh icosphere(double radius, int subdivisions);
// capped cylinder, axis z, total height `height`
TriangleMesh cylinder(double radius, double height, int radial_segments, int height_segments);
// axis-aligned box with each face split into segments x segments quads
TriangleMesh box(double size_x, double size_y, double size_z, int segments);
TriangleMesh torus(double major_radius, double minor_radius, int major_segments,
                   int minor_segments);
// open rectangle in the z=0 plane
TriangleMesh plane(double size_x, double size_y, int nx, int ny);

QuadMesh quad_grid(double size_x, double size_y, int nx, int ny);
QuadMesh quad_torus(double major_radius, double minor_radius, int major_segments,
                    int minor_segments);
QuadMesh quad_box(double size, int segments);

}  // namespace xgen::shapes
