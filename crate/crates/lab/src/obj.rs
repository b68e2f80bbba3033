//! Wavefront OBJ: vertices and faces only. Polygons are fan-triangulated.

use std::fmt::Write as _;
use std::path::Path;

use mfdiff::manifold::TriangleMesh;

use crate::error::{io_err, LabError, Result};

pub fn parse_obj(text: &str) -> std::result::Result<(Vec<[f64; 3]>, Vec<[usize; 3]>), String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let tok = parts.next().ok_or_else(|| format!("line {}: short vertex", lineno + 1))?;
                    *c = tok.parse().map_err(|_| format!("line {}: bad coordinate {tok:?}", lineno + 1))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in parts {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| format!("line {}: bad index {tok:?}", lineno + 1))?;
                    // Negative indices count back from the latest vertex.
                    let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(format!("line {}: index out of range", lineno + 1));
                    }
                    idx.push(i as usize);
                }
                if idx.len() < 3 {
                    return Err(format!("line {}: face with fewer than 3 vertices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let (v, f) = parse_obj(&text).map_err(|message| LabError::Format { path: path.into(), message })?;
    Ok(TriangleMesh::new(v, f)?)
}

pub fn to_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quads_and_slashes() {
        let text = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let (v, f) = parse_obj(text).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3]]);
        let (_, neg) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(neg, vec![[0, 1, 2]]);
        assert!(parse_obj("v 0 0\n").is_err());
        assert!(parse_obj("f 1 2\n").is_err());
    }

    #[test]
    fn icosahedron_survives_writing() {
        let mesh = TriangleMesh::icosahedron();
        let (v, f) = parse_obj(&to_obj(&mesh)).unwrap();
        assert_eq!(v, mesh.vertices());
        assert_eq!(f, mesh.faces());
    }
}
