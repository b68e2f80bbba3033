//! Point sets as CSV (one row per point, columns `x0..x{n-1}`, optional
//! trailing `face`) with a JSON metadata sidecar next to the file.

use std::path::{Path, PathBuf};

use crate::error::{io_err, LabError, Result};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_points(path: &Path, points: &[Vec<f64>], faces: Option<&[usize]>, meta: &serde_json::Value) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    if faces.is_some() {
        header.push("face".into());
    }
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        // `{:?}` prints the shortest string that reads back to the same f64.
        let mut rec: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        if let Some(f) = faces {
            rec.push(f[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))?;
    let meta_text = serde_json::to_string_pretty(meta)?;
    std::fs::write(sidecar_path(path), meta_text).map_err(io_err(sidecar_path(path)))
}

pub struct PointFile {
    pub points: Vec<Vec<f64>>,
    pub faces: Option<Vec<usize>>,
}

pub fn read_points(path: &Path) -> Result<PointFile> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let has_face = header.iter().last() == Some("face");
    let dim = header.len() - usize::from(has_face);
    let mut points = Vec::new();
    let mut faces = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |message: String| LabError::Format { path: path.into(), message };
        let p = (0..dim)
            .map(|i| rec[i].parse::<f64>().map_err(|e| bad(format!("row {}: {e}", points.len() + 1))))
            .collect::<Result<Vec<_>>>()?;
        if has_face {
            faces.push(rec[dim].parse::<usize>().map_err(|e| bad(format!("row {}: {e}", points.len() + 1)))?);
        }
        points.push(p);
    }
    Ok(PointFile { points, faces: has_face.then_some(faces) })
}

pub fn read_meta(path: &Path) -> Result<serde_json::Value> {
    let p = sidecar_path(path);
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_and_faces_read_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let pts = vec![vec![0.1, -2.5e-17, 1.0 / 3.0], vec![1e300, 0.0, -0.0]];
        let meta = serde_json::json!({"seed": 3});
        write_points(&path, &pts, Some(&[4, 7]), &meta).unwrap();
        let back = read_points(&path).unwrap();
        assert_eq!(back.points, pts);
        assert_eq!(back.faces, Some(vec![4, 7]));
        assert_eq!(read_meta(&path).unwrap(), meta);
    }
}
