//! Synthetic desk-scale scenes with ground-truth parse trees.
//!
//! A template places rectangular planar parts (floor, wall, table parts,
//! tabletop objects, a chair) with randomized sizes and positions, samples
//! grid points on each with surface noise, over-segments parts into 1..=3
//! angular sectors around the part center (so sibling segments all touch),
//! and emits exact segment statistics, point-based pairwise minimum
//! distances, occlusion flags for supports that real scans miss (chair
//! legs), and the matching labeled tree. Everything is driven by one seed.
//!
//! Generated structures stay within the rule vocabulary of the bundled
//! office grammar, so corpora train against either extracted rules or the
//! bundled file.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{
    build_adjacency, save_scene, save_tree, AdjacencyInput, GroundTruthTree, Scene, Segment,
    SegmentStats,
};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub name: String,
    /// Surface noise along each part's normal, in meters.
    pub noise_sigma: f64,
    /// Each part is split into 1..=max_overseg segments.
    pub max_overseg: u8,
    pub wall_prob: f64,
    pub chair_prob: f64,
    pub monitor_prob: f64,
    pub keyboard_prob: f64,
    pub cpu_prob: f64,
    pub paper_prob: f64,
    /// Table part variants: `[top+leg, top+drawer+leg, top+drawer+tray]`.
    pub table_variant_weights: [f64; 3],
    /// Chair variants: `[base+backRest, +chairBack, +chairArmRest]`.
    pub chair_variant_weights: [f64; 3],
    /// CPU variants: `[top+front, side+front, side+front+top]`.
    pub cpu_variant_weights: [f64; 3],
    pub tabletop_z: (f64, f64),
}

impl SceneTemplate {
    /// Full desk scene roster.
    pub fn office() -> Self {
        SceneTemplate {
            name: "office".into(),
            noise_sigma: 0.003,
            max_overseg: 3,
            wall_prob: 0.7,
            chair_prob: 0.65,
            monitor_prob: 0.75,
            keyboard_prob: 0.7,
            cpu_prob: 0.5,
            paper_prob: 0.35,
            table_variant_weights: [0.5, 0.3, 0.2],
            chair_variant_weights: [0.5, 0.25, 0.25],
            cpu_variant_weights: [0.35, 0.35, 0.3],
            tabletop_z: (0.62, 0.78),
        }
    }

    /// Tiny scenes (3-4 terminals): floor, tabletop, leg, maybe a monitor.
    pub fn mini() -> Self {
        SceneTemplate {
            name: "mini".into(),
            noise_sigma: 0.003,
            max_overseg: 1,
            wall_prob: 0.0,
            chair_prob: 0.0,
            monitor_prob: 0.5,
            keyboard_prob: 0.0,
            cpu_prob: 0.0,
            paper_prob: 0.0,
            table_variant_weights: [1.0, 0.0, 0.0],
            chair_variant_weights: [1.0, 0.0, 0.0],
            cpu_variant_weights: [1.0, 0.0, 0.0],
            tabletop_z: (0.62, 0.78),
        }
    }

    /// Like `mini` with light over-segmentation (up to 8 terminals).
    pub fn small() -> Self {
        SceneTemplate {
            max_overseg: 2,
            name: "small".into(),
            ..Self::mini()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "office" => Some(Self::office()),
            "mini" => Some(Self::mini()),
            "small" => Some(Self::small()),
            _ => None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

// ---------------------------------------------------------------------------
// Geometry scaffolding
// ---------------------------------------------------------------------------

/// A rectangular planar patch: `origin + a*u + b*v`, `a in [0, su]`,
/// `b in [0, sv]`, plus its sampled in-plane points.
struct PartBuild {
    label: &'static str,
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    /// In-plane point coordinates (along u, along v).
    points: Vec<(f64, f64)>,
}

impl PartBuild {
    fn new(
        label: &'static str,
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        su: f64,
        sv: f64,
        spacing: f64,
    ) -> Self {
        let mut points = Vec::new();
        let nu = (su / spacing).ceil() as usize;
        let nv = (sv / spacing).ceil() as usize;
        for i in 0..=nu {
            for j in 0..=nv {
                points.push((su * i as f64 / nu as f64, sv * j as f64 / nv as f64));
            }
        }
        PartBuild {
            label,
            origin,
            u,
            v,
            points,
        }
    }

    fn normal(&self) -> Vector3<f64> {
        self.u.cross(&self.v).normalize()
    }

    /// Append points along a 3D segment that lies in this part's plane.
    fn add_line(&mut self, p0: Vector3<f64>, p1: Vector3<f64>, n: usize) {
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p = p0 + (p1 - p0) * t;
            let d = p - self.origin;
            self.points.push((d.dot(&self.u), d.dot(&self.v)));
        }
    }
}

/// Area of the convex hull of 2D points (monotone chain + shoelace).
fn hull_area(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let mut area2 = 0.0;
    for i in 0..hull.len() {
        let (x0, y0) = hull[i];
        let (x1, y1) = hull[(i + 1) % hull.len()];
        area2 += x0 * y1 - x1 * y0;
    }
    area2.abs() / 2.0
}

fn normal_sample(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller; one draw per call keeps the stream simple.
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    sigma * (-2.0 * u1.ln()).sqrt() * u2.cos()
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Scene assembly
// ---------------------------------------------------------------------------

/// The object-level structure the tree is built from.
enum ObjectSpec {
    /// Single-part object: label node over one part.
    Single(usize),
    /// Multi-part object: object label over flat part children.
    Multi(&'static str, Vec<usize>),
}

struct Build {
    parts: Vec<PartBuild>,
    contacts: Vec<(usize, usize, (Vector3<f64>, Vector3<f64>), (Vector3<f64>, Vector3<f64>))>,
    occluded: Vec<(usize, usize)>,
    /// Objects stacked on the table, in attachment order.
    table_objects: Vec<ObjectSpec>,
    /// Objects attached to the floor complex, in attachment order.
    floor_objects: Vec<ObjectSpec>,
    table: Option<ObjectSpec>,
    floor: usize,
}

impl Build {
    fn add(&mut self, part: PartBuild) -> usize {
        self.parts.push(part);
        self.parts.len() - 1
    }

    /// Declare a touching pair: points are injected along `line` in both
    /// parts (the line must lie in both planes).
    fn contact(&mut self, a: usize, b: usize, line: (Vector3<f64>, Vector3<f64>)) {
        self.contacts.push((a, b, line, line));
    }

    /// Touching pair with distinct closest edges per part.
    fn contact_lines(
        &mut self,
        a: usize,
        b: usize,
        line_a: (Vector3<f64>, Vector3<f64>),
        line_b: (Vector3<f64>, Vector3<f64>),
    ) {
        self.contacts.push((a, b, line_a, line_b));
    }
}

pub fn gen_scene(template: &SceneTemplate, seed: u64) -> Result<(Scene, GroundTruthTree)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = template;
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();

    let mut b = Build {
        parts: Vec::new(),
        contacts: Vec::new(),
        occluded: Vec::new(),
        table_objects: Vec::new(),
        floor_objects: Vec::new(),
        table: None,
        floor: 0,
    };

    let mini = t.name != "office";
    let (floor_w, floor_d, floor_spacing, part_spacing) = if mini {
        (1.8 + rng.random_range(-0.1..0.1), 1.8 + rng.random_range(-0.1..0.1), 0.12, 0.06)
    } else {
        (3.2 + rng.random_range(-0.2..0.2), 3.2 + rng.random_range(-0.2..0.2), 0.18, 0.07)
    };
    let (fx0, fy0) = (-floor_w / 2.0, -floor_d / 2.0);
    b.floor = b.add(PartBuild::new(
        "Floor",
        Vector3::new(fx0, fy0, 0.0),
        x,
        y,
        floor_w,
        floor_d,
        floor_spacing,
    ));

    // Table: always present.
    let zt = rng.random_range(t.tabletop_z.0..t.tabletop_z.1);
    let (tw, td) = if mini {
        (rng.random_range(0.8..1.0), rng.random_range(0.5..0.65))
    } else {
        (rng.random_range(1.0..1.4), rng.random_range(0.6..0.8))
    };
    let tx = rng.random_range(-0.3..0.3);
    let ty = rng.random_range(-0.5..-0.15);
    let top = b.add(PartBuild::new(
        "tableTop",
        Vector3::new(tx - tw / 2.0, ty - td / 2.0, zt),
        x,
        y,
        tw,
        td,
        part_spacing,
    ));

    let variant = pick_weighted(&mut rng, &t.table_variant_weights);
    let mut table_parts = vec![top];
    if variant == 0 || variant == 1 {
        let leg_x = tx - tw / 2.0 + 0.02;
        let leg_d = 0.4 * td;
        let leg_y0 = ty - leg_d / 2.0;
        let leg = b.add(PartBuild::new(
            "tableLeg",
            Vector3::new(leg_x, leg_y0, 0.0),
            y,
            z,
            leg_d,
            zt,
            part_spacing,
        ));
        b.contact(
            leg,
            top,
            (
                Vector3::new(leg_x, leg_y0, zt),
                Vector3::new(leg_x, leg_y0 + leg_d, zt),
            ),
        );
        b.contact(
            leg,
            b.floor,
            (
                Vector3::new(leg_x, leg_y0, 0.0),
                Vector3::new(leg_x, leg_y0 + leg_d, 0.0),
            ),
        );
        table_parts.push(leg);
    }
    if variant == 1 || variant == 2 {
        let dw = 0.5 * tw;
        let dx0 = tx - dw / 2.0;
        let dy = ty - td / 2.0;
        let dz0 = zt - 0.32;
        let drawer = b.add(PartBuild::new(
            "tableDrawer",
            Vector3::new(dx0, dy, dz0),
            x,
            z,
            dw,
            0.30,
        part_spacing,
        ));
        // Drawer top edge sits 0.02 below the top's front edge.
        b.contact_lines(
            drawer,
            top,
            (Vector3::new(dx0, dy, zt - 0.02), Vector3::new(dx0 + dw, dy, zt - 0.02)),
            (Vector3::new(dx0, dy, zt), Vector3::new(dx0 + dw, dy, zt)),
        );
        table_parts.push(drawer);
        if variant == 2 {
            // No leg: the floor link goes through the (occluded) drawer gap.
            b.occluded.push((drawer, b.floor));
        }
    }
    if variant == 2 {
        let kw = 0.4 * tw;
        let kx0 = tx - kw / 2.0;
        let ky0 = ty - td / 2.0 - 0.28;
        let kz = zt - 0.14;
        let tray = b.add(PartBuild::new(
            "keyboardTray",
            Vector3::new(kx0, ky0, kz),
            x,
            y,
            kw,
            0.30,
            part_spacing,
        ));
        // Tray back edge crosses the drawer plane.
        let dy = ty - td / 2.0;
        b.contact(
            tray,
            *table_parts.last().unwrap(),
            (Vector3::new(kx0, dy, kz), Vector3::new(kx0 + kw, dy, kz)),
        );
        table_parts.push(tray);
    }
    b.table = Some(ObjectSpec::Multi("Table", table_parts));

    // Tabletop objects.
    if rng.random_range(0.0..1.0) < t.monitor_prob {
        let mw = rng.random_range(0.45..0.55);
        let mh = rng.random_range(0.30..0.38);
        let mx = tx + 0.05 * tw + rng.random_range(-0.08..0.08);
        let my = ty + 0.22 * td;
        let monitor = b.add(PartBuild::new(
            "monitor",
            Vector3::new(mx - mw / 2.0, my, zt),
            x,
            z,
            mw,
            mh,
            part_spacing,
        ));
        b.contact(
            monitor,
            top,
            (Vector3::new(mx - mw / 2.0, my, zt), Vector3::new(mx + mw / 2.0, my, zt)),
        );
        b.table_objects.push(ObjectSpec::Single(monitor));
    }
    if rng.random_range(0.0..1.0) < t.keyboard_prob {
        let (kw, kd) = (0.45, 0.15);
        let kx = tx - 0.05 * tw + rng.random_range(-0.05..0.05);
        let ky = ty - 0.28 * td;
        let kz = zt + 0.015;
        let keyboard = b.add(PartBuild::new(
            "keyboard",
            Vector3::new(kx - kw / 2.0, ky - kd / 2.0, kz),
            x,
            y,
            kw,
            kd,
            0.05,
        ));
        b.contact_lines(
            keyboard,
            top,
            (Vector3::new(kx - kw / 2.0, ky, kz), Vector3::new(kx + kw / 2.0, ky, kz)),
            (Vector3::new(kx - kw / 2.0, ky, zt), Vector3::new(kx + kw / 2.0, ky, zt)),
        );
        b.table_objects.push(ObjectSpec::Single(keyboard));
    }
    if !mini && rng.random_range(0.0..1.0) < t.cpu_prob {
        let (cw, cd, ch) = (0.2, 0.44, 0.44);
        let cx = tx - 0.36 * tw;
        let cy = ty + 0.18 * td;
        let variant = pick_weighted(&mut rng, &t.cpu_variant_weights);
        let mut cpu_parts = Vec::new();
        let front_y = cy - cd / 2.0;
        let side_x = cx + cw / 2.0;
        let front = b.add(PartBuild::new(
            "CPUFront",
            Vector3::new(cx - cw / 2.0, front_y, zt),
            x,
            z,
            cw,
            ch,
            part_spacing,
        ));
        b.contact(
            front,
            top,
            (Vector3::new(cx - cw / 2.0, front_y, zt), Vector3::new(side_x, front_y, zt)),
        );
        let side = if variant >= 1 {
            let side = b.add(PartBuild::new(
                "CPUSide",
                Vector3::new(side_x, front_y, zt),
                y,
                z,
                cd,
                ch,
                part_spacing,
            ));
            b.contact(
                side,
                top,
                (Vector3::new(side_x, front_y, zt), Vector3::new(side_x, front_y + cd, zt)),
            );
            b.contact(
                side,
                front,
                (Vector3::new(side_x, front_y, zt), Vector3::new(side_x, front_y, zt + ch)),
            );
            Some(side)
        } else {
            None
        };
        let cpu_top = if variant == 0 || variant == 2 {
            let ct = b.add(PartBuild::new(
                "CPUTop",
                Vector3::new(cx - cw / 2.0, front_y, zt + ch),
                x,
                y,
                cw,
                cd,
                part_spacing,
            ));
            b.contact(
                ct,
                front,
                (
                    Vector3::new(cx - cw / 2.0, front_y, zt + ch),
                    Vector3::new(side_x, front_y, zt + ch),
                ),
            );
            if let Some(side) = side {
                b.contact(
                    ct,
                    side,
                    (
                        Vector3::new(side_x, front_y, zt + ch),
                        Vector3::new(side_x, front_y + cd, zt + ch),
                    ),
                );
            }
            Some(ct)
        } else {
            None
        };
        // Listing order mirrors the grammar variants.
        match variant {
            0 => cpu_parts.extend([cpu_top.unwrap(), front]),
            1 => cpu_parts.extend([side.unwrap(), front]),
            _ => cpu_parts.extend([side.unwrap(), front, cpu_top.unwrap()]),
        }
        b.table_objects.push(ObjectSpec::Multi("CPU", cpu_parts));
    }
    if !mini && rng.random_range(0.0..1.0) < t.paper_prob {
        let (pw, pd) = (0.21, 0.30);
        let px = tx + 0.32 * tw;
        let py = ty - 0.15 * td;
        let pz = zt + 0.004;
        let paper = b.add(PartBuild::new(
            "paper",
            Vector3::new(px - pw / 2.0, py - pd / 2.0, pz),
            x,
            y,
            pw,
            pd,
            0.04,
        ));
        b.contact_lines(
            paper,
            top,
            (Vector3::new(px - pw / 2.0, py, pz), Vector3::new(px + pw / 2.0, py, pz)),
            (Vector3::new(px - pw / 2.0, py, zt), Vector3::new(px + pw / 2.0, py, zt)),
        );
        b.table_objects.push(ObjectSpec::Single(paper));
    }

    // Wall along the back edge of the floor.
    if rng.random_range(0.0..1.0) < t.wall_prob {
        let wy = fy0 + floor_d;
        let wall = b.add(PartBuild::new(
            "Wall",
            Vector3::new(fx0, wy, 0.0),
            x,
            z,
            floor_w,
            2.2,
            0.15,
        ));
        b.contact(
            wall,
            b.floor,
            (Vector3::new(fx0, wy, 0.0), Vector3::new(fx0 + floor_w, wy, 0.0)),
        );
        b.floor_objects.push(ObjectSpec::Single(wall));
    }

    // Chair in front of the table; its legs are never scanned, so the
    // floor link is an occluded pair.
    if !mini && rng.random_range(0.0..1.0) < t.chair_prob {
        let bz = rng.random_range(0.40..0.47);
        let bx = tx + rng.random_range(-0.2..0.2);
        let by = ty - td / 2.0 - rng.random_range(0.25..0.38);
        let (bw, bd) = (0.45, 0.45);
        let base = b.add(PartBuild::new(
            "chairBase",
            Vector3::new(bx - bw / 2.0, by - bd / 2.0, bz),
            x,
            y,
            bw,
            bd,
            0.05,
        ));
        b.occluded.push((base, b.floor));
        let back_y = by + bd / 2.0;
        let rest = b.add(PartBuild::new(
            "chairBackRest",
            Vector3::new(bx - bw / 2.0, back_y, bz),
            x,
            z,
            bw,
            0.45,
            0.05,
        ));
        b.contact(
            rest,
            base,
            (Vector3::new(bx - bw / 2.0, back_y, bz), Vector3::new(bx + bw / 2.0, back_y, bz)),
        );
        let mut chair_parts = vec![base, rest];
        match pick_weighted(&mut rng, &t.chair_variant_weights) {
            1 => {
                let cb = b.add(PartBuild::new(
                    "chairBack",
                    Vector3::new(bx - bw / 2.0, back_y, bz - 0.28),
                    x,
                    z,
                    bw,
                    0.28,
                    0.05,
                ));
                b.contact(
                    cb,
                    base,
                    (
                        Vector3::new(bx - bw / 2.0, back_y, bz),
                        Vector3::new(bx + bw / 2.0, back_y, bz),
                    ),
                );
                chair_parts.push(cb);
            }
            2 => {
                let az = bz + 0.18;
                let arm = b.add(PartBuild::new(
                    "chairArmRest",
                    Vector3::new(bx + bw / 2.0 - 0.09, by - 0.18, az),
                    x,
                    y,
                    0.09,
                    0.18 + bd / 2.0,
                    0.04,
                ));
                b.contact(
                    arm,
                    rest,
                    (
                        Vector3::new(bx + bw / 2.0 - 0.09, back_y, az),
                        Vector3::new(bx + bw / 2.0, back_y, az),
                    ),
                );
                chair_parts.push(arm);
            }
            _ => {}
        }
        b.floor_objects.push(ObjectSpec::Multi("Chair", chair_parts));
    }

    realize(b, t, &mut rng)
}

/// Materialize parts into segments, distances, adjacency, and the tree.
fn realize(
    mut b: Build,
    t: &SceneTemplate,
    rng: &mut ChaCha8Rng,
) -> Result<(Scene, GroundTruthTree)> {
    // Inject contact points before sector assignment.
    let contacts = std::mem::take(&mut b.contacts);
    for (pa, pb, line_a, line_b) in &contacts {
        b.parts[*pa].add_line(line_a.0, line_a.1, 10);
        b.parts[*pb].add_line(line_b.0, line_b.1, 10);
    }

    // Split parts into sectors and materialize noisy 3D points.
    let mut segments: Vec<Segment> = Vec::new();
    let mut points_of: Vec<Vec<Vector3<f64>>> = Vec::new();
    let mut segs_of_part: Vec<Vec<u32>> = Vec::new();
    let mut next_id: u32 = 0;
    for part in &b.parts {
        let k = if t.max_overseg <= 1 {
            1
        } else {
            rng.random_range(1..=t.max_overseg as usize)
        };
        let cu = part.points.iter().map(|p| p.0).sum::<f64>() / part.points.len() as f64;
        let cv = part.points.iter().map(|p| p.1).sum::<f64>() / part.points.len() as f64;
        let theta0 = rng.random_range(0.0..std::f64::consts::TAU);
        let sector_of = |p: &(f64, f64)| -> usize {
            if k == 1 {
                return 0;
            }
            let a = (p.1 - cv).atan2(p.0 - cu) - theta0;
            let a = a.rem_euclid(std::f64::consts::TAU);
            ((a / (std::f64::consts::TAU / k as f64)) as usize).min(k - 1)
        };
        let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
        for p in &part.points {
            buckets[sector_of(p)].push(*p);
        }
        // Seam points near the center keep all sectors mutually adjacent.
        for (s, bucket) in buckets.iter_mut().enumerate() {
            let mid = theta0 + (s as f64 + 0.5) * std::f64::consts::TAU / k as f64;
            bucket.push((cu + 0.002 * mid.cos(), cv + 0.002 * mid.sin()));
        }
        let split_ok = buckets.iter().all(|s| s.len() >= 8);
        let buckets = if split_ok {
            buckets
        } else {
            vec![part.points.clone()]
        };

        let normal = part.normal();
        let mut ids = Vec::new();
        for bucket in &buckets {
            let area = hull_area(bucket);
            let pts: Vec<Vector3<f64>> = bucket
                .iter()
                .map(|&(a, v)| {
                    part.origin
                        + part.u * a
                        + part.v * v
                        + normal * normal_sample(rng, t.noise_sigma)
                })
                .collect();
            let stats = SegmentStats::from_points(&pts, area);
            segments.push(Segment::new(next_id, stats));
            points_of.push(pts);
            ids.push(next_id);
            next_id += 1;
        }
        segs_of_part.push(ids);
    }

    // Pairwise minimum point distances, with a bounding-sphere early out.
    let mut input = AdjacencyInput::default();
    let centers: Vec<Vector3<f64>> = segments.iter().map(|s| s.centroid).collect();
    let radii: Vec<f64> = points_of
        .iter()
        .zip(&centers)
        .map(|(pts, c)| {
            pts.iter()
                .map(|p| (p - c).norm())
                .fold(0.0f64, f64::max)
        })
        .collect();
    for i in 0..segments.len() {
        for j in (i + 1)..segments.len() {
            let lower = (centers[i] - centers[j]).norm() - radii[i] - radii[j];
            if lower > 0.6 {
                continue;
            }
            let mut best = f64::INFINITY;
            for p in &points_of[i] {
                for q in &points_of[j] {
                    let d2 = (p - q).norm_squared();
                    if d2 < best {
                        best = d2;
                    }
                }
            }
            let d = best.sqrt();
            if d < 0.6 {
                input.set_dist(segments[i].id, segments[j].id, d);
            }
        }
    }
    for (pa, pb) in &b.occluded {
        for &sa in &segs_of_part[*pa] {
            for &sb in &segs_of_part[*pb] {
                input.flag_occluded(sa, sb);
            }
        }
    }

    let scene = build_adjacency(segments, &input)?;

    // Ground-truth tree.
    let plane_chain = |part: usize| -> GroundTruthTree {
        let ids = &segs_of_part[part];
        let mut node = GroundTruthTree::node("Plane", vec![GroundTruthTree::leaf(ids[0])]);
        for &id in &ids[1..] {
            node = GroundTruthTree::node("Plane", vec![node, GroundTruthTree::leaf(id)]);
        }
        node
    };
    let part_node = |part: usize| -> GroundTruthTree {
        GroundTruthTree::node(b.parts[part].label, vec![plane_chain(part)])
    };
    let object_node = |spec: &ObjectSpec| -> GroundTruthTree {
        match spec {
            ObjectSpec::Single(p) => part_node(*p),
            ObjectSpec::Multi(label, parts) => {
                GroundTruthTree::node(*label, parts.iter().map(|&p| part_node(p)).collect())
            }
        }
    };

    let table = b.table.as_ref().expect("table is always generated");
    let mut tc = GroundTruthTree::node("TableComplex", vec![object_node(table)]);
    for obj in &b.table_objects {
        tc = GroundTruthTree::node("TableComplex", vec![tc, object_node(obj)]);
    }
    let mut fc = GroundTruthTree::node("FloorComplex", vec![part_node(b.floor)]);
    fc = GroundTruthTree::node("FloorComplex", vec![fc, tc]);
    for obj in &b.floor_objects {
        fc = GroundTruthTree::node("FloorComplex", vec![fc, object_node(obj)]);
    }
    let tree = GroundTruthTree::node("S", vec![fc]);
    tree.validate()?;
    Ok((scene, tree))
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub scene: String,
    pub tree: String,
    pub fold: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub template: String,
    pub count: usize,
    pub seed: u64,
    pub folds: usize,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialization");
        crate::scene::write_file(path.as_ref(), &text)
    }
}

/// Decorrelated per-scene seed.
pub fn scene_seed(corpus_seed: u64, index: usize) -> u64 {
    let mut x = corpus_seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index as u64 + 1));
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Write `n` scene/tree pairs plus a manifest with round-robin folds.
pub fn gen_corpus(
    template: &SceneTemplate,
    n: usize,
    seed: u64,
    folds: usize,
    dir: impl AsRef<Path>,
) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let (scene, tree) = gen_scene(template, scene_seed(seed, i))?;
        let scene_name = format!("scene_{i:03}.json");
        let tree_name = format!("tree_{i:03}.json");
        save_scene(&scene, dir.join(&scene_name))?;
        save_tree(&tree, dir.join(&tree_name))?;
        entries.push(CorpusEntry {
            scene: scene_name,
            tree: tree_name,
            fold: i % folds.max(1),
        });
    }
    let manifest = CorpusManifest {
        template: template.name.clone(),
        count: n,
        seed,
        folds: folds.max(1),
        entries,
    };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Load every scene/tree pair of a corpus, in manifest order.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<(CorpusManifest, Vec<(Scene, GroundTruthTree)>)> {
    let manifest_path = manifest_path.as_ref();
    let manifest = CorpusManifest::load(manifest_path)?;
    let dir: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let scene = crate::scene::load_scene(dir.join(&e.scene))?;
        let tree = crate::scene::load_tree(dir.join(&e.tree))?;
        out.push((scene, tree));
    }
    Ok((manifest, out))
}

/// Per-object connectivity check used by tests: every object's segments
/// form a connected subgraph.
pub fn object_spans_connected(scene: &Scene, tree: &GroundTruthTree) -> bool {
    fn objects(tree: &GroundTruthTree, out: &mut Vec<Vec<crate::scene::SegmentId>>) {
        if let GroundTruthTree::Node { label, children } = tree {
            let generic = label == "S" || label.ends_with("Complex");
            if !generic {
                out.push(tree.leaf_ids());
                return;
            }
            for c in children {
                objects(c, out);
            }
        }
    }
    let mut objs = Vec::new();
    objects(tree, &mut objs);
    objs.iter().all(|ids| {
        let mut span = crate::span::Span::empty(scene.span_words());
        for id in ids {
            match scene.index_of(*id) {
                Some(i) => span.insert(i),
                None => return false,
            }
        }
        scene.span_connected(&span)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{scene_to_json, tree_to_json};

    #[test]
    fn same_seed_is_bit_identical() {
        let t = SceneTemplate::office();
        let (s1, t1) = gen_scene(&t, 42).unwrap();
        let (s2, t2) = gen_scene(&t, 42).unwrap();
        assert_eq!(scene_to_json(&s1), scene_to_json(&s2));
        assert_eq!(tree_to_json(&t1), tree_to_json(&t2));
        let (s3, _) = gen_scene(&t, 43).unwrap();
        assert_ne!(scene_to_json(&s1), scene_to_json(&s3));
    }

    #[test]
    fn oversegmented_parts_are_pairwise_adjacent() {
        let mut t = SceneTemplate::office();
        t.max_overseg = 3;
        let mut saw_triple = false;
        for seed in 0..12 {
            let (scene, tree) = gen_scene(&t, seed).unwrap();
            // Parts are the lowest labeled nodes above Plane chains.
            fn parts(tree: &GroundTruthTree, out: &mut Vec<Vec<crate::scene::SegmentId>>) {
                if let GroundTruthTree::Node { label, children } = tree {
                    if label == "Plane" {
                        out.push(tree.leaf_ids());
                        return;
                    }
                    for c in children {
                        parts(c, out);
                    }
                }
            }
            let mut part_ids = Vec::new();
            parts(&tree, &mut part_ids);
            for ids in part_ids {
                if ids.len() == 3 {
                    saw_triple = true;
                }
                for i in 0..ids.len() {
                    for j in (i + 1)..ids.len() {
                        let key = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                        assert!(
                            scene.edges().contains(&key),
                            "sectors {key:?} of one part must be adjacent (seed {seed})"
                        );
                    }
                }
            }
        }
        assert!(saw_triple, "expected at least one 3-way split in 12 seeds");
    }

    #[test]
    fn objects_are_connected() {
        let t = SceneTemplate::office();
        for seed in 0..20 {
            let (scene, tree) = gen_scene(&t, seed).unwrap();
            assert!(
                object_spans_connected(&scene, &tree),
                "object disconnected at seed {seed}"
            );
        }
    }

    #[test]
    fn corpus_layout_and_folds() {
        let dir = tempfile::tempdir().unwrap();
        let t = SceneTemplate::mini();
        let m = gen_corpus(&t, 0, 1, 4, dir.path()).unwrap();
        assert!(m.entries.is_empty());

        let m = gen_corpus(&t, 8, 1, 4, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 8);
        for f in 0..4 {
            assert_eq!(m.entries.iter().filter(|e| e.fold == f).count(), 2);
        }
        let (m2, pairs) = load_corpus(dir.path().join("manifest.json")).unwrap();
        assert_eq!(m2.entries.len(), 8);
        assert_eq!(pairs.len(), 8);
    }

    #[test]
    fn eighty_four_scene_four_fold_split() {
        let folds = (0..84).map(|i| i % 4).collect::<Vec<_>>();
        for f in 0..4 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 21);
        }
    }

    #[test]
    fn mini_scenes_are_tiny() {
        let t = SceneTemplate::mini();
        for seed in 0..30 {
            let (scene, _) = gen_scene(&t, seed).unwrap();
            assert!(scene.n_terminals() >= 3 && scene.n_terminals() <= 4);
        }
    }
}
