//! Readers and writers for XYZ, ASCII OFF and ASCII PLY point data.
//!
//! XYZ lines are `x y z [nx ny nz] [label]`. OFF and PLY contribute vertices only;
//! faces are ignored. Non-finite coordinates are rejected with the offending line number.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Xyz,
    Off,
    Ply,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "pts" => Some(Format::Xyz),
            "off" => Some(Format::Off),
            "ply" => Some(Format::Ply),
            _ => None,
        }
    }
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = Format::from_path(path)
        .ok_or_else(|| Error::Config(format!("unknown point-cloud format: {}", path.display())))?;
    let text = std::fs::read_to_string(path)?;
    parse(&text, format)
}

pub fn parse(text: &str, format: Format) -> Result<PointCloud> {
    match format {
        Format::Xyz => parse_xyz(text),
        Format::Off => parse_off(text),
        Format::Ply => parse_ply(text),
    }
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_label(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("expected a non-negative integer label, found {tok:?}")))
}

fn unit_normal(n: Point, line: usize) -> Result<Point> {
    let len = n.norm();
    if len < 1e-12 {
        return Err(Error::parse(line, "zero-length normal"));
    }
    Ok(n / len)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, content) in data_lines(text) {
        let toks: Vec<&str> = content.split_whitespace().collect();
        if !matches!(toks.len(), 3 | 4 | 6 | 7) {
            return Err(Error::parse(
                line,
                format!("expected 3, 4, 6 or 7 columns, found {}", toks.len()),
            ));
        }
        match width {
            None => width = Some(toks.len()),
            Some(w) if w != toks.len() => {
                return Err(Error::parse(line, format!("expected {w} columns, found {}", toks.len())))
            }
            _ => {}
        }
        let x = parse_float(toks[0], line)?;
        let y = parse_float(toks[1], line)?;
        let z = parse_float(toks[2], line)?;
        points.push(Point::new(x, y, z));
        if toks.len() >= 6 {
            let n = Point::new(
                parse_float(toks[3], line)?,
                parse_float(toks[4], line)?,
                parse_float(toks[5], line)?,
            );
            normals.push(unit_normal(n, line)?);
        }
        if toks.len() == 4 || toks.len() == 7 {
            labels.push(parse_label(toks[toks.len() - 1], line)?);
        }
    }
    let n = points.len();
    PointCloud::with_attributes(
        points,
        (normals.len() == n && n > 0).then_some(normals),
        (labels.len() == n && n > 0).then_some(labels),
    )
}

pub fn parse_off(text: &str) -> Result<PointCloud> {
    let mut lines = data_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty OFF file"))?;
    // Some writers put the counts on the header line ("OFF 8 6 12").
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, "missing OFF header"))?
        .trim();
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(hline + 1, "missing OFF counts line"))?
    } else {
        (hline, rest)
    };
    let nv: usize = counts
        .split_whitespace()
        .next()
        .ok_or_else(|| Error::parse(cline, "missing vertex count"))?
        .parse()
        .map_err(|_| Error::parse(cline, "bad vertex count"))?;
    let mut points = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, content) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, format!("expected {nv} vertices")))?;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(line, "vertex needs three coordinates"));
        }
        points.push(Point::new(
            parse_float(toks[0], line)?,
            parse_float(toks[1], line)?,
            parse_float(toks[2], line)?,
        ));
    }
    PointCloud::new(points)
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "missing ply magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    // Elements that precede the vertex block, as (count, property count).
    let mut before_vertex: Vec<usize> = Vec::new();
    let mut header_end = None;
    for (line, content) in lines.by_ref() {
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(Error::parse(line, format!("unsupported PLY format {fmt}")));
                }
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(line, "bad element count"))?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if vertex_count.is_none() {
                    before_vertex.push(count);
                }
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_end = Some(line);
                break;
            }
            _ => {}
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(1, "missing end_header"))?;
    let nv = vertex_count.ok_or_else(|| Error::parse(header_end, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse(header_end, "vertex element lacks x/y/z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let label_col = col("label");

    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let skip: usize = before_vertex.iter().sum();
    for _ in 0..skip {
        body.next();
    }
    let mut points = Vec::with_capacity(nv);
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..nv {
        let (line, content) = body
            .next()
            .ok_or_else(|| Error::parse(header_end, format!("expected {nv} vertex lines")))?;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < props.len() {
            return Err(Error::parse(
                line,
                format!("expected {} vertex properties, found {}", props.len(), toks.len()),
            ));
        }
        points.push(Point::new(
            parse_float(toks[ix], line)?,
            parse_float(toks[iy], line)?,
            parse_float(toks[iz], line)?,
        ));
        if let Some((a, b, c)) = normal_cols {
            let n = Point::new(
                parse_float(toks[a], line)?,
                parse_float(toks[b], line)?,
                parse_float(toks[c], line)?,
            );
            normals.push(unit_normal(n, line)?);
        }
        if let Some(l) = label_col {
            labels.push(parse_label(toks[l], line)?);
        }
    }
    PointCloud::with_attributes(
        points,
        normal_cols.map(|_| normals),
        label_col.map(|_| labels),
    )
}

/// XYZ text; normals and labels are written when present.
pub fn to_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(n) = cloud.normals() {
            let _ = write!(out, " {} {} {}", n[i].x, n[i].y, n[i].z);
        }
        if let Some(l) = cloud.labels() {
            let _ = write!(out, " {}", l[i]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_with_normals_and_labels() {
        let text = "# comment\n0 0 0 0 0 2 1\n1 2 3 1 0 0 0\n";
        let c = parse_xyz(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.normals().unwrap()[0], Point::new(0.0, 0.0, 1.0));
        assert_eq!(c.labels().unwrap(), &[1, 0]);
    }

    #[test]
    fn xyz_round_trip() {
        let text = "0.5 -1 2 3\n1e-3 0 0 1\n";
        let c = parse_xyz(text).unwrap();
        assert_eq!(parse_xyz(&to_xyz(&c)).unwrap(), c);
    }

    #[test]
    fn xyz_rejects_nan_with_line_number() {
        let err = parse_xyz("0 0 0\n\n1 nan 0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_xyz("0 0 inf\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn xyz_rejects_ragged_rows() {
        assert!(matches!(parse_xyz("0 0 0\n0 0 0 1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn off_vertices_only() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n";
        let c = parse_off(text).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(*c.point(3), Point::new(0.0, 0.0, 1.0));
        let inline = parse_off("OFF 2 0 0\n0 0 0\n1 1 1\n").unwrap();
        assert_eq!(inline.len(), 2);
    }

    #[test]
    fn off_reports_bad_vertex_line() {
        let err = parse_off("OFF\n2 0 0\n0 0 0\n1 NaN 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn ply_ascii_vertices_and_normals() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
property float nx\nproperty float ny\nproperty float nz\nelement face 1\nproperty list uchar int vertex_indices\n\
end_header\n0 0 0 0 0 1\n1 1 1 1 0 0\n3 0 1 1\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.normals().unwrap()[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn ply_rejects_binary_and_nonfinite() {
        let bin = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(parse_ply(bin).is_err());
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 inf 0\n";
        assert!(matches!(parse_ply(bad), Err(Error::Parse { line: 8, .. })));
    }
}
