//! Procedural, bilaterally symmetric shape families with analytic landmarks.
//!
//! Axes: `x` is lateral (the symmetry plane is `x = 0`, "left" is `-x`),
//! `y` is up and `z` runs front to back (noses point to `+z`). Generated
//! meshes are not normalized; call [`SyntheticShape::normalized`].

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{normalize_unit_box, Mesh, UnitBoxTransform};
use crate::{Error, Result, Rng, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Winged,
    Table,
    Box,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Winged => "winged",
            Family::Table => "table",
            Family::Box => "box",
        }
    }

    /// Landmark names in the order every instance reports them.
    pub fn landmark_names(self) -> &'static [&'static str] {
        match self {
            Family::Winged => &[
                "nose",
                "tail",
                "left_wing_tip",
                "right_wing_tip",
                "fin_top",
                "left_stabilizer_tip",
                "right_stabilizer_tip",
            ],
            Family::Table => &[
                "front_left_leg_bottom",
                "front_right_leg_bottom",
                "back_left_leg_bottom",
                "back_right_leg_bottom",
                "front_left_top_corner",
                "front_right_top_corner",
                "back_left_top_corner",
                "back_right_top_corner",
            ],
            Family::Box => &[
                "bottom_front_left",
                "bottom_front_right",
                "bottom_back_left",
                "bottom_back_right",
                "top_front_left",
                "top_front_right",
                "top_back_left",
                "top_back_right",
            ],
        }
    }
}

impl Family {
    /// Part names indexed by the ids in [`SyntheticShape::face_parts`].
    pub fn part_names(self) -> &'static [&'static str] {
        match self {
            Family::Winged => &["fuselage", "wing", "stabilizer", "fin"],
            Family::Table => &["top", "leg"],
            Family::Box => &["body"],
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "winged" => Ok(Family::Winged),
            "table" => Ok(Family::Table),
            "box" => Ok(Family::Box),
            other => Err(Error::Config(format!("unknown shape family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    pub position: Vec3,
}

/// One generated instance. Landmarks are for evaluation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShape {
    pub family: Family,
    pub mesh: Mesh,
    /// Part id of every face, indexing [`Family::part_names`].
    pub face_parts: Vec<u32>,
    pub landmarks: Vec<Landmark>,
    pub params: Vec<(String, f64)>,
}

impl SyntheticShape {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn landmark(&self, name: &str) -> Option<Vec3> {
        self.landmarks.iter().find(|l| l.name == name).map(|l| l.position)
    }

    pub fn landmark_positions(&self) -> Vec<Vec3> {
        self.landmarks.iter().map(|l| l.position).collect()
    }

    /// Mesh and landmarks mapped into the unit box together.
    pub fn normalized(&self) -> Result<(SyntheticShape, UnitBoxTransform)> {
        let (mesh, t) = normalize_unit_box(&self.mesh)?;
        let landmarks = self
            .landmarks
            .iter()
            .map(|l| Landmark {
                name: l.name.clone(),
                position: t.apply(l.position),
            })
            .collect();
        Ok((
            SyntheticShape {
                family: self.family,
                mesh,
                face_parts: self.face_parts.clone(),
                landmarks,
                params: self.params.clone(),
            },
            t,
        ))
    }
}

pub fn generate_synthetic_family(family: Family, count: usize, rng: &mut Rng) -> Vec<SyntheticShape> {
    (0..count)
        .map(|_| match family {
            Family::Winged => winged(rng),
            Family::Table => table(rng),
            Family::Box => boxy(rng),
        })
        .collect()
}

#[derive(Default)]
struct Builder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_parts: Vec<u32>,
    /// Part id stamped on faces added from now on.
    part: u32,
}

// Corner index = 4*ix + 2*iy + iz, outward winding.
const HEX_FACES: [[usize; 3]; 12] = [
    [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
    [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
];

impl Builder {
    fn hexahedron(&mut self, corners: [Vec3; 8]) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&corners);
        let flip = orientation_flipped(&corners);
        for f in HEX_FACES {
            let f = if flip { [f[0], f[2], f[1]] } else { f };
            self.faces.push([base + f[0], base + f[1], base + f[2]]);
        }
        self.face_parts.resize(self.faces.len(), self.part);
    }

    /// The hexahedron and its mirror image across `x = 0`.
    fn mirrored_pair(&mut self, corners: [Vec3; 8]) {
        self.hexahedron(corners);
        self.hexahedron(corners.map(|[x, y, z]| [-x, y, z]));
    }

    /// Closed tube through rings of `(z, radius, y_center)` with pointed caps.
    fn loft(&mut self, front: Vec3, stations: &[(f64, f64, f64)], back: Vec3) {
        const SIDES: usize = 8;
        let base = self.vertices.len();
        self.vertices.push(front);
        for &(z, r, yc) in stations {
            for k in 0..SIDES {
                let a = PI / 8.0 + k as f64 * PI / 4.0;
                self.vertices.push([r * a.cos(), yc + r * a.sin(), z]);
            }
        }
        self.vertices.push(back);
        let ring = |s: usize, k: usize| base + 1 + s * SIDES + (k % SIDES);
        for k in 0..SIDES {
            self.faces.push([base, ring(0, k), ring(0, k + 1)]);
        }
        for s in 0..stations.len() - 1 {
            for k in 0..SIDES {
                self.faces.push([ring(s, k), ring(s + 1, k), ring(s + 1, k + 1)]);
                self.faces.push([ring(s, k), ring(s + 1, k + 1), ring(s, k + 1)]);
            }
        }
        let last = base + 1 + stations.len() * SIDES;
        let s = stations.len() - 1;
        for k in 0..SIDES {
            self.faces.push([last, ring(s, k + 1), ring(s, k)]);
        }
        self.face_parts.resize(self.faces.len(), self.part);
    }

    fn finish(self) -> (Mesh, Vec<u32>) {
        let mesh = Mesh::new(self.vertices, self.faces).expect("generator builds valid meshes");
        (mesh, self.face_parts)
    }
}

fn orientation_flipped(c: &[Vec3; 8]) -> bool {
    use super::vec3::{cross, dot, sub};
    let ex = sub(c[4], c[0]);
    let ey = sub(c[2], c[0]);
    let ez = sub(c[1], c[0]);
    dot(cross(ex, ey), ez) < 0.0
}

/// Thin slab from a root section to a tip section, both spanning `chord`
/// along `-z` from their leading edge.
fn slab(root_le: Vec3, root_chord: f64, tip_le: Vec3, tip_chord: f64, thickness: f64) -> [Vec3; 8] {
    let h = thickness / 2.0;
    let mut c = [[0.0; 3]; 8];
    for ix in 0..2 {
        let (le, chord) = if ix == 0 { (root_le, root_chord) } else { (tip_le, tip_chord) };
        for iy in 0..2 {
            for iz in 0..2 {
                let y = le[1] + if iy == 0 { -h } else { h };
                let z = le[2] - if iz == 0 { chord } else { 0.0 };
                c[4 * ix + 2 * iy + iz] = [le[0], y, z];
            }
        }
    }
    c
}

fn named(names: &[&str], positions: Vec<Vec3>) -> Vec<Landmark> {
    names
        .iter()
        .zip(positions)
        .map(|(n, p)| Landmark {
            name: n.to_string(),
            position: p,
        })
        .collect()
}

fn winged(rng: &mut Rng) -> SyntheticShape {
    let length = rng.range(0.75, 1.0);
    let radius = rng.range(0.035, 0.07);
    let span = rng.range(0.55, 1.0);
    let root_chord = rng.range(0.15, 0.28);
    let tip_chord = rng.range(0.04, 0.1);
    let sweep = rng.range(0.0, 0.3);
    let wing_z = rng.range(-0.05, 0.12);
    let tail_height = rng.range(0.08, 0.22);
    let stab_span = rng.range(0.18, 0.4);
    let thickness = 0.02;

    let nose_z = length / 2.0;
    let tail_z = -length / 2.0;
    let mut b = Builder::default();
    b.loft(
        [0.0, 0.0, nose_z],
        &[
            (nose_z - 0.12 * length, radius * 0.8, 0.0),
            (nose_z - 0.25 * length, radius, 0.0),
            (tail_z + 0.3 * length, radius, 0.0),
            (tail_z + 0.06 * length, radius * 0.45, radius * 0.4),
        ],
        [0.0, radius * 0.4, tail_z],
    );

    b.part = 1;
    // Wings: root buried in the fuselage, tip at x = span / 2.
    let root_le = [radius * 0.5, 0.0, wing_z + root_chord / 2.0];
    let tip_le = [span / 2.0, 0.0, wing_z + root_chord / 2.0 - sweep];
    b.mirrored_pair(slab(root_le, root_chord, tip_le, tip_chord, thickness));

    b.part = 2;
    // Horizontal stabilizers.
    let stab_root_chord = 0.1 * length;
    let stab_le_z = tail_z + 0.06 * length + stab_root_chord;
    let stab_y = radius * 0.4;
    let stab_tip_le = [stab_span / 2.0, stab_y, stab_le_z - 0.04];
    let stab_tip_chord = 0.05 * length;
    b.mirrored_pair(slab(
        [radius * 0.3, stab_y, stab_le_z],
        stab_root_chord,
        stab_tip_le,
        stab_tip_chord,
        thickness * 0.8,
    ));

    // Vertical fin lies in the symmetry plane, so its slab is built along
    // y and then split symmetrically in x.
    let fin_root_chord = 0.14 * length;
    let fin_le_z = tail_z + 0.04 * length + fin_root_chord;
    let fin_tip_chord = 0.06 * length;
    let fin_base_y = radius * 0.5;
    let fin_top_y = radius + tail_height;
    let fin_tip_le_z = fin_le_z - 0.06;
    let half = thickness * 0.4;
    let mut fin = [[0.0; 3]; 8];
    for ix in 0..2 {
        let x = if ix == 0 { -half } else { half };
        for iy in 0..2 {
            let (y, le, chord) = if iy == 0 {
                (fin_base_y, fin_le_z, fin_root_chord)
            } else {
                (fin_top_y, fin_tip_le_z, fin_tip_chord)
            };
            for iz in 0..2 {
                let z = le - if iz == 0 { chord } else { 0.0 };
                fin[4 * ix + 2 * iy + iz] = [x, y, z];
            }
        }
    }
    b.part = 3;
    b.hexahedron(fin);

    let tip = |le: Vec3, chord: f64, x_sign: f64| [x_sign * le[0], le[1], le[2] - chord / 2.0];
    let landmarks = named(
        Family::Winged.landmark_names(),
        vec![
            [0.0, 0.0, nose_z],
            [0.0, radius * 0.4, tail_z],
            tip(tip_le, tip_chord, -1.0),
            tip(tip_le, tip_chord, 1.0),
            [0.0, fin_top_y, fin_tip_le_z - fin_tip_chord / 2.0],
            tip(stab_tip_le, stab_tip_chord, -1.0),
            tip(stab_tip_le, stab_tip_chord, 1.0),
        ],
    );
    let (mesh, face_parts) = b.finish();
    SyntheticShape {
        family: Family::Winged,
        mesh,
        face_parts,
        landmarks,
        params: vec![
            ("length".into(), length),
            ("radius".into(), radius),
            ("span".into(), span),
            ("root_chord".into(), root_chord),
            ("tip_chord".into(), tip_chord),
            ("sweep".into(), sweep),
            ("wing_z".into(), wing_z),
            ("tail_height".into(), tail_height),
            ("stabilizer_span".into(), stab_span),
        ],
    }
}

fn axis_box(lo: Vec3, hi: Vec3) -> [Vec3; 8] {
    let mut c = [[0.0; 3]; 8];
    for ix in 0..2 {
        for iy in 0..2 {
            for iz in 0..2 {
                c[4 * ix + 2 * iy + iz] = [
                    if ix == 0 { lo[0] } else { hi[0] },
                    if iy == 0 { lo[1] } else { hi[1] },
                    if iz == 0 { lo[2] } else { hi[2] },
                ];
            }
        }
    }
    c
}

fn table(rng: &mut Rng) -> SyntheticShape {
    let width = rng.range(0.5, 1.0);
    let depth = rng.range(0.4, 0.8);
    let height = rng.range(0.35, 0.8);
    let top = rng.range(0.03, 0.07);
    let leg = rng.range(0.03, 0.07);
    let inset = rng.range(0.0, 0.08);

    let (hw, hd) = (width / 2.0, depth / 2.0);
    let mut b = Builder::default();
    b.hexahedron(axis_box([-hw, height - top, -hd], [hw, height, hd]));
    b.part = 1;
    let lx = hw - inset;
    let lz = hd - inset;
    for &z_sign in &[1.0, -1.0] {
        let z_out = z_sign * lz;
        let z_in = z_sign * (lz - leg);
        let (z0, z1) = if z_sign > 0.0 { (z_in, z_out) } else { (z_out, z_in) };
        b.mirrored_pair(axis_box([lx - leg, 0.0, z0], [lx, height - top, z1]));
    }
    let foot = |xs: f64, zs: f64| [xs * (lx - leg / 2.0), 0.0, zs * (lz - leg / 2.0)];
    let corner = |xs: f64, zs: f64| [xs * hw, height, zs * hd];
    let landmarks = named(
        Family::Table.landmark_names(),
        vec![
            foot(-1.0, 1.0), foot(1.0, 1.0), foot(-1.0, -1.0), foot(1.0, -1.0),
            corner(-1.0, 1.0), corner(1.0, 1.0), corner(-1.0, -1.0), corner(1.0, -1.0),
        ],
    );
    let (mesh, face_parts) = b.finish();
    SyntheticShape {
        family: Family::Table,
        mesh,
        face_parts,
        landmarks,
        params: vec![
            ("width".into(), width),
            ("depth".into(), depth),
            ("height".into(), height),
            ("top_thickness".into(), top),
            ("leg_width".into(), leg),
            ("leg_inset".into(), inset),
        ],
    }
}

fn boxy(rng: &mut Rng) -> SyntheticShape {
    let width = rng.range(0.3, 1.0);
    let height = rng.range(0.3, 1.0);
    let depth = rng.range(0.3, 1.0);
    let (hw, hd) = (width / 2.0, depth / 2.0);
    let mut b = Builder::default();
    b.hexahedron(axis_box([-hw, 0.0, -hd], [hw, height, hd]));
    let c = |xs: f64, y: f64, zs: f64| [xs * hw, y, zs * hd];
    let landmarks = named(
        Family::Box.landmark_names(),
        vec![
            c(-1.0, 0.0, 1.0), c(1.0, 0.0, 1.0), c(-1.0, 0.0, -1.0), c(1.0, 0.0, -1.0),
            c(-1.0, height, 1.0), c(1.0, height, 1.0), c(-1.0, height, -1.0), c(1.0, height, -1.0),
        ],
    );
    let (mesh, face_parts) = b.finish();
    SyntheticShape {
        family: Family::Box,
        mesh,
        face_parts,
        landmarks,
        params: vec![
            ("width".into(), width),
            ("height".into(), height),
            ("depth".into(), depth),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::super::vec3;
    use super::*;

    fn mirror_paired(mesh: &Mesh) -> bool {
        mesh.vertices.iter().all(|&[x, y, z]| {
            mesh.vertices.iter().any(|&v| vec3::dist(v, [-x, y, z]) < 1e-6)
        })
    }

    #[test]
    fn every_family_is_mirror_symmetric() {
        let mut rng = Rng::new(4);
        for family in [Family::Winged, Family::Table, Family::Box] {
            for s in generate_synthetic_family(family, 3, &mut rng) {
                assert!(mirror_paired(&s.mesh), "{family:?}");
                assert_eq!(s.landmarks.len(), family.landmark_names().len());
                for l in &s.landmarks {
                    let [x, y, z] = l.position;
                    assert!(s.landmarks.iter().any(|m| vec3::dist(m.position, [-x, y, z]) < 1e-12));
                }
            }
        }
    }

    #[test]
    fn wing_tip_sits_at_half_span() {
        let s = &generate_synthetic_family(Family::Winged, 1, &mut Rng::new(17))[0];
        let span = s.param("span").unwrap();
        assert_eq!(s.landmark("left_wing_tip").unwrap()[0], -span / 2.0);
        assert_eq!(s.landmark("right_wing_tip").unwrap()[0], span / 2.0);
    }

    #[test]
    fn landmarks_lie_on_the_surface() {
        let mut rng = Rng::new(8);
        for family in [Family::Winged, Family::Table, Family::Box] {
            for s in generate_synthetic_family(family, 4, &mut rng) {
                for l in &s.landmarks {
                    let d = s.mesh.distance_to_surface(l.position);
                    assert!(d < 1e-9, "{family:?} {} off surface by {d}", l.name);
                }
            }
        }
    }

    #[test]
    fn every_face_has_a_part() {
        let mut rng = Rng::new(5);
        for family in [Family::Winged, Family::Table, Family::Box] {
            let s = &generate_synthetic_family(family, 1, &mut rng)[0];
            assert_eq!(s.face_parts.len(), s.mesh.faces.len());
            let used: std::collections::BTreeSet<u32> = s.face_parts.iter().copied().collect();
            assert_eq!(used.len(), family.part_names().len(), "{family:?}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic_family(Family::Winged, 10, &mut Rng::new(99));
        let b = generate_synthetic_family(Family::Winged, 10, &mut Rng::new(99));
        assert_eq!(a, b);
    }

    #[test]
    fn normalization_keeps_symmetry_plane() {
        let s = &generate_synthetic_family(Family::Winged, 1, &mut Rng::new(2))[0];
        let (n, _) = s.normalized().unwrap();
        let (lo, hi) = vec3::bounds(&n.mesh.vertices);
        assert!((lo[0] + hi[0]).abs() < 1e-12);
        assert!(mirror_paired(&n.mesh));
    }
}
