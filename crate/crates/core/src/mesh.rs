//! Triangle-mesh extraction of the decoder's zero level set, plus the mesh
//! utilities the metrics and exporters need.
//!
//! Extraction runs marching tetrahedra on a regular grid (each cell split
//! into six Kuhn tetrahedra, which is face-consistent across neighbouring
//! cells, so shared edges produce shared welded vertices and the surface is
//! closed). Vertices are placed by linear interpolation along grid edges.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lie::Vec3;
use crate::prior::{decode_gradients, decode_sdf, DecoderSpec, ShapeCode};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize];
                let b = self.vertices[t[1] as usize];
                let c = self.vertices[t[2] as usize];
                (b - a).cross(&(c - a)).norm() * 0.5
            })
            .sum()
    }

    /// Axis-aligned bounds of the vertex set.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = self.vertices.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for v in &self.vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        Some((lo, hi))
    }

    /// Deterministic area-weighted surface sampling.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Vec3> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize];
            let b = self.vertices[t[1] as usize];
            let c = self.vertices[t[2] as usize];
            total += (b - a).cross(&(c - a)).norm() * 0.5;
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.random_range(0.0..total);
            let idx = cumulative.partition_point(|&c| c < target).min(self.triangles.len() - 1);
            let t = self.triangles[idx];
            let a = self.vertices[t[0] as usize];
            let b = self.vertices[t[1] as usize];
            let c = self.vertices[t[2] as usize];
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let sq = r1.sqrt();
            out.push(a * (1.0 - sq) + b * (sq * (1.0 - r2)) + c * (sq * r2));
        }
        out
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.vertices {
            writeln!(file, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(file, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

/// ASCII PLY export of a point cloud.
pub fn write_ply(points: &[Vec3], path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "ply")?;
    writeln!(file, "format ascii 1.0")?;
    writeln!(file, "element vertex {}", points.len())?;
    writeln!(file, "property double x")?;
    writeln!(file, "property double y")?;
    writeln!(file, "property double z")?;
    writeln!(file, "end_header")?;
    for p in points {
        writeln!(file, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Six-tetrahedra Kuhn split of the unit cell; corner index is x + 2y + 4z.
const TETRAHEDRA: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Extract the zero level set of the decoded SDF on a regular grid of
/// `resolution` cells per axis over the decoder's bounding volume.
pub fn decode_mesh(code: &ShapeCode, spec: &DecoderSpec, resolution: usize) -> Result<TriangleMesh> {
    if resolution < 8 {
        return Err(Error::InvalidParameter(format!(
            "mesh resolution must be >= 8, got {resolution}"
        )));
    }
    let half = spec.bounding_half_extents() * 1.15;
    let n = resolution;
    let np = n + 1;
    let cell = Vec3::new(2.0 * half.x / n as f64, 2.0 * half.y / n as f64, 2.0 * half.z / n as f64);

    let node_pos = |ix: usize, iy: usize, iz: usize| -> Vec3 {
        Vec3::new(
            -half.x + cell.x * ix as f64,
            -half.y + cell.y * iy as f64,
            -half.z + cell.z * iz as f64,
        )
    };

    // Sample the SDF on all grid nodes.
    let mut values = vec![0.0f64; np * np * np];
    let node_idx = |ix: usize, iy: usize, iz: usize| ix + np * (iy + np * iz);
    for iz in 0..np {
        for iy in 0..np {
            for ix in 0..np {
                values[node_idx(ix, iy, iz)] = decode_sdf(&node_pos(ix, iy, iz), code, spec);
            }
        }
    }

    let mut mesh = TriangleMesh::default();
    let mut edge_vertices: HashMap<(u32, u32), u32> = HashMap::new();

    // Vertex on the grid edge (a, b), welded across tetrahedra and cells.
    let mut edge_vertex = |mesh: &mut TriangleMesh,
                           a: u32,
                           b: u32,
                           pa: Vec3,
                           pb: Vec3,
                           sa: f64,
                           sb: f64|
     -> u32 {
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&idx) = edge_vertices.get(&key) {
            return idx;
        }
        let t = sa / (sa - sb);
        let idx = mesh.vertices.len() as u32;
        mesh.vertices.push(pa + (pb - pa) * t);
        edge_vertices.insert(key, idx);
        idx
    };

    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let corner = |c: usize| -> (u32, Vec3, f64) {
                    let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                    let (gx, gy, gz) = (ix + dx, iy + dy, iz + dz);
                    let idx = node_idx(gx, gy, gz);
                    (idx as u32, node_pos(gx, gy, gz), values[idx])
                };
                let corners: Vec<(u32, Vec3, f64)> = (0..8).map(corner).collect();
                // Skip cells with no sign change.
                if corners.iter().all(|c| c.2 < 0.0) || corners.iter().all(|c| c.2 >= 0.0) {
                    continue;
                }
                for tet in &TETRAHEDRA {
                    let vs: Vec<&(u32, Vec3, f64)> = tet.iter().map(|&i| &corners[i]).collect();
                    let inside: Vec<usize> = (0..4).filter(|&i| vs[i].2 < 0.0).collect();
                    let outside: Vec<usize> = (0..4).filter(|&i| vs[i].2 >= 0.0).collect();
                    let mut cut = |i: usize, j: usize, mesh: &mut TriangleMesh| {
                        let (ai, pi, si) = *vs[i];
                        let (aj, pj, sj) = *vs[j];
                        edge_vertex(mesh, ai, aj, pi, pj, si, sj)
                    };
                    match inside.len() {
                        1 => {
                            let a = inside[0];
                            let tri = [
                                cut(a, outside[0], &mut mesh),
                                cut(a, outside[1], &mut mesh),
                                cut(a, outside[2], &mut mesh),
                            ];
                            mesh.triangles.push(tri);
                        }
                        3 => {
                            let a = outside[0];
                            let tri = [
                                cut(inside[0], a, &mut mesh),
                                cut(inside[1], a, &mut mesh),
                                cut(inside[2], a, &mut mesh),
                            ];
                            mesh.triangles.push(tri);
                        }
                        2 => {
                            let (a, b) = (inside[0], inside[1]);
                            let (c, d) = (outside[0], outside[1]);
                            let v_ac = cut(a, c, &mut mesh);
                            let v_ad = cut(a, d, &mut mesh);
                            let v_bd = cut(b, d, &mut mesh);
                            let v_bc = cut(b, c, &mut mesh);
                            mesh.triangles.push([v_ac, v_ad, v_bd]);
                            mesh.triangles.push([v_ac, v_bd, v_bc]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    orient_outward(&mut mesh, code, spec);
    Ok(mesh)
}

/// Flip triangles whose normal points against the local SDF gradient.
fn orient_outward(mesh: &mut TriangleMesh, code: &ShapeCode, spec: &DecoderSpec) {
    for tri in &mut mesh.triangles {
        let a = mesh.vertices[tri[0] as usize];
        let b = mesh.vertices[tri[1] as usize];
        let c = mesh.vertices[tri[2] as usize];
        let normal = (b - a).cross(&(c - a));
        if normal.norm() == 0.0 {
            continue;
        }
        let centroid = (a + b + c) / 3.0;
        let (grad, _) = decode_gradients(&centroid, code, spec);
        if normal.dot(&grad) < 0.0 {
            tri.swap(1, 2);
        }
    }
}
