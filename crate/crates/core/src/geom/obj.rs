//! ASCII Wavefront OBJ: `v` and `f` records only.

use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::{Error, Result};

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parse OBJ text. Polygons are fan-triangulated from their first vertex;
/// negative indices count back from the current vertex count.
pub fn parse_obj(text: &str, origin: &str) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let raw = raw.split('#').next().unwrap_or("");
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in &mut p {
                    let t = tok
                        .next()
                        .ok_or_else(|| err(line, "vertex needs three coordinates".into()))?;
                    *slot = t
                        .parse::<f64>()
                        .map_err(|_| err(line, format!("bad coordinate `{t}`")))?;
                    if !slot.is_finite() {
                        return Err(err(line, format!("non-finite coordinate `{t}`")));
                    }
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| err(line, format!("bad face index `{t}`")))?;
                    let n = vertices.len() as i64;
                    let resolved = match i {
                        0 => return Err(err(line, "face index 0 is invalid".into())),
                        i if i > 0 => i - 1,
                        i => n + i,
                    };
                    if resolved < 0 || resolved >= n {
                        return Err(err(
                            line,
                            format!("face index {i} out of range for {n} vertices"),
                        ));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(err(line, "face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    // Fan triangulation of a polygon with repeated indices can produce
    // slivers; drop those rather than failing the whole file.
    faces.retain(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
    Mesh::new(vertices, faces)
}

/// OBJ text with full-precision (round-trip) coordinates.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 48 + mesh.faces.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "t").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", "t").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let e = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", "t").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_indices_and_slashes() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3/1/1 -2//1 -1\n";
        let m = parse_obj(src, "t").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_obj("# nothing\n", "t"), Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn bad_coordinate() {
        assert!(matches!(
            parse_obj("v 0 x 0\n", "t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_parse_is_exact() {
        let m = Mesh::new(
            vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5e-7, 4.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(parse_obj(&write_obj(&m), "t").unwrap(), m);
    }
}
