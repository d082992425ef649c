//! 2.5-D image-method ray tracer.
//!
//! Buildings are vertical prisms over simple polygon footprints. Each
//! footprint edge is a wall: a vertical rectangle from the ground up to the
//! building height. Specular reflections off walls are found by mirroring the
//! BS across wall planes (up to two bounces). Ground reflection, diffraction
//! and scattering are not modeled.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{friis_amplitude, PathSet, RayPath};
use crate::error::{invalid, Result};
use crate::resource_grid::GridConfig;
use crate::SPEED_OF_LIGHT;

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub polygon: Vec<[f64; 2]>,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRegion {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

fn default_reflection_loss() -> f64 {
    6.0
}

fn default_bounces() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub buildings: Vec<Building>,
    pub bs_position: [f64; 3],
    pub ue_region: UeRegion,
    #[serde(default = "default_reflection_loss")]
    pub reflection_loss_db: f64,
    #[serde(default = "default_bounces")]
    pub max_bounces: u8,
    /// Optional UE velocity (m/s); when set, paths carry a Doppler shift.
    #[serde(default)]
    pub ue_velocity: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy)]
struct Wall {
    a: [f64; 2],
    b: [f64; 2],
    height: f64,
}

impl Wall {
    fn mirror(&self, p: [f64; 3]) -> [f64; 3] {
        let d = sub2(self.b, self.a);
        let len2 = dot2(d, d);
        let t = dot2(sub2([p[0], p[1]], self.a), d) / len2;
        let foot = [self.a[0] + t * d[0], self.a[1] + t * d[1]];
        [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1], p[2]]
    }
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Parameters `(t, u)` where segment `p0 -> p1` meets segment `q0 -> q1`,
/// `p0 + t (p1 - p0) = q0 + u (q1 - q0)`. `None` when parallel.
fn segment_params(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<(f64, f64)> {
    let r = sub2(p1, p0);
    let s = sub2(q1, q0);
    let denom = cross2(r, s);
    if denom.abs() < 1e-15 * (dot2(r, r).sqrt() * dot2(s, s).sqrt()).max(1e-300) {
        return None;
    }
    let qp = sub2(q0, p0);
    Some((cross2(qp, s) / denom, cross2(qp, r) / denom))
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| invalid(format!("scene: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read scene {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_bounces > 2 {
            return Err(invalid(format!("max_bounces must be 0, 1 or 2, got {}", self.max_bounces)));
        }
        if !self.reflection_loss_db.is_finite() || self.reflection_loss_db < 0.0 {
            return Err(invalid("reflection_loss_db must be finite and non-negative"));
        }
        let r = &self.ue_region;
        if !(r.min[0] <= r.max[0] && r.min[1] <= r.max[1]) {
            return Err(invalid("ue_region min must not exceed max"));
        }
        for (bi, b) in self.buildings.iter().enumerate() {
            if b.polygon.len() < 3 {
                return Err(invalid(format!("building {bi} needs at least 3 vertices")));
            }
            if !(b.height > 0.0) {
                return Err(invalid(format!("building {bi} height must be positive")));
            }
            let n = b.polygon.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                    if adjacent {
                        continue;
                    }
                    let (p0, p1) = (b.polygon[i], b.polygon[(i + 1) % n]);
                    let (q0, q1) = (b.polygon[j], b.polygon[(j + 1) % n]);
                    if let Some((t, u)) = segment_params(p0, p1, q0, q1) {
                        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                            return Err(invalid(format!("building {bi} polygon self-intersects")));
                        }
                    }
                }
            }
        }
        if self.is_inside_building(self.bs_position) {
            return Err(invalid("bs_position lies inside a building"));
        }
        Ok(())
    }

    /// True when `p` is within some footprint and below its roof.
    pub fn is_inside_building(&self, p: [f64; 3]) -> bool {
        self.buildings
            .iter()
            .any(|b| p[2] <= b.height && point_in_polygon([p[0], p[1]], &b.polygon))
    }

    fn walls(&self) -> Vec<Wall> {
        let mut walls = Vec::new();
        for b in &self.buildings {
            let n = b.polygon.len();
            for i in 0..n {
                walls.push(Wall {
                    a: b.polygon[i],
                    b: b.polygon[(i + 1) % n],
                    height: b.height,
                });
            }
        }
        walls
    }
}

/// True when the straight segment `p -> q` passes through a wall, ignoring
/// the walls listed in `skip` (the ones the segment reflects off).
fn blocked(walls: &[Wall], p: [f64; 3], q: [f64; 3], skip: &[usize]) -> bool {
    for (wi, w) in walls.iter().enumerate() {
        if skip.contains(&wi) {
            continue;
        }
        if let Some((t, u)) = segment_params([p[0], p[1]], [q[0], q[1]], w.a, w.b) {
            if t > GEOM_EPS && t < 1.0 - GEOM_EPS && u > -GEOM_EPS && u < 1.0 + GEOM_EPS {
                let z = p[2] + t * (q[2] - p[2]);
                if z < w.height {
                    return true;
                }
            }
        }
    }
    false
}

fn direction_angles(from: [f64; 3], to: [f64; 3]) -> (f64, f64) {
    let (dx, dy, dz) = (to[0] - from[0], to[1] - from[1], to[2] - from[2]);
    (dy.atan2(dx), dz.atan2(dx.hypot(dy)))
}

/// Builds one path from its vertex chain `BS, R1, .., UE`.
fn make_path(scene: &Scene, grid: &GridConfig, chain: &[[f64; 3]], unfolded_len: f64) -> Result<RayPath> {
    let bounces = chain.len() - 2;
    let amplitude = friis_amplitude(unfolded_len, grid.carrier_hz)?
        * 10f64.powf(-(bounces as f64) * scene.reflection_loss_db / 20.0);
    let delay = unfolded_len / SPEED_OF_LIGHT;
    let phase = (-2.0 * PI * grid.carrier_hz * delay).rem_euclid(2.0 * PI);
    let ue = chain[chain.len() - 1];
    let last = chain[chain.len() - 2];
    let (aod_az, aod_el) = direction_angles(chain[0], chain[1]);
    let (aoa_az, aoa_el) = direction_angles(ue, last);
    let doppler_hz = match scene.ue_velocity {
        Some(v) => {
            let d = dist3(ue, last).max(1e-12);
            let u = [(last[0] - ue[0]) / d, (last[1] - ue[1]) / d, (last[2] - ue[2]) / d];
            let lambda = SPEED_OF_LIGHT / grid.carrier_hz;
            (v[0] * u[0] + v[1] * u[1] + v[2] * u[2]) / lambda
        }
        None => 0.0,
    };
    Ok(RayPath {
        amplitude,
        phase: if phase >= 2.0 * PI { 0.0 } else { phase },
        delay_s: delay,
        doppler_hz,
        aoa_az,
        aoa_el,
        aod_az,
        aod_el,
    })
}

/// Point on wall `w` hit by the straight segment `from -> to`, if the hit is
/// within the wall's extent.
fn wall_hit(w: &Wall, from: [f64; 3], to: [f64; 3]) -> Option<[f64; 3]> {
    let (t, u) = segment_params([from[0], from[1]], [to[0], to[1]], w.a, w.b)?;
    if !(t > GEOM_EPS && t < 1.0 - GEOM_EPS && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u)) {
        return None;
    }
    let z = from[2] + t * (to[2] - from[2]);
    if z < 0.0 || z > w.height {
        return None;
    }
    Some([from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1]), z])
}

/// Traces LOS and specular wall reflections from the scene's BS to `ue`.
/// Paths are returned sorted by delay.
pub fn trace_paths(scene: &Scene, ue: [f64; 3], grid: &GridConfig) -> Result<PathSet> {
    grid.validate()?;
    if scene.is_inside_building(ue) {
        return Err(invalid(format!("UE at {ue:?} is inside a building")));
    }
    let bs = scene.bs_position;
    let walls = scene.walls();
    let mut paths = Vec::new();

    if !blocked(&walls, bs, ue, &[]) {
        let d = dist3(bs, ue);
        if d > 0.0 {
            paths.push(make_path(scene, grid, &[bs, ue], d)?);
        }
    }

    if scene.max_bounces >= 1 {
        for (wi, w) in walls.iter().enumerate() {
            let image = w.mirror(bs);
            let Some(r) = wall_hit(w, image, ue) else { continue };
            if blocked(&walls, bs, r, &[wi]) || blocked(&walls, r, ue, &[wi]) {
                continue;
            }
            paths.push(make_path(scene, grid, &[bs, r, ue], dist3(image, ue))?);
        }
    }

    if scene.max_bounces >= 2 {
        for (ai, wa) in walls.iter().enumerate() {
            let img1 = wa.mirror(bs);
            for (bi, wb) in walls.iter().enumerate() {
                if ai == bi {
                    continue;
                }
                let img2 = wb.mirror(img1);
                let Some(r2) = wall_hit(wb, img2, ue) else { continue };
                let Some(r1) = wall_hit(wa, img1, r2) else { continue };
                if blocked(&walls, bs, r1, &[ai])
                    || blocked(&walls, r1, r2, &[ai, bi])
                    || blocked(&walls, r2, ue, &[bi])
                {
                    continue;
                }
                paths.push(make_path(scene, grid, &[bs, r1, r2, ue], dist3(img2, ue))?);
            }
        }
    }

    paths.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    Ok(PathSet { paths, ue_position: ue })
}
