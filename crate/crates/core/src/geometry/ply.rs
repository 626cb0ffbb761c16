//! ASCII PLY for point clouds: `x y z [nx ny nz] [timestamp]`.
//!
//! Reals are written with 9 significant digits, so a read/write cycle of a
//! written file reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{Point3, PointCloud, UnitVec3};
use crate::error::{Error, Result};

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn to_string(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.timestamps().is_some() {
        out.push_str("property uint timestamp\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        out.push_str(&fmt_real(p.x));
        out.push(' ');
        out.push_str(&fmt_real(p.y));
        out.push(' ');
        out.push_str(&fmt_real(p.z));
        if let Some(ns) = cloud.normals() {
            for c in ns[i].iter() {
                out.push(' ');
                out.push_str(&fmt_real(*c));
            }
        }
        if let Some(ts) = cloud.timestamps() {
            let _ = write!(out, " {}", ts[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_string(cloud)).map_err(|e| Error::io(path, e))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("ply.tmp");
    write(cloud, &tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    from_reader(file)
}

pub fn from_str(text: &str) -> Result<PointCloud> {
    from_reader(text.as_bytes())
}

pub fn from_reader(reader: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(reader).lines();
    let mut next_line = || -> Result<Option<String>> {
        lines
            .next()
            .transpose()
            .map_err(|e| Error::Ply(format!("read failed: {e}")))
    };

    if next_line()?.as_deref().map(str::trim) != Some("ply") {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = next_line()?.ok_or_else(|| Error::Ply("unterminated header".into()))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "ascii" {
                    return Err(Error::Ply(format!("unsupported format '{fmt}'")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(
                        n.parse()
                            .map_err(|_| Error::Ply(format!("bad vertex count '{n}'")))?,
                    );
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::Ply(
                        "list properties on vertices are unsupported".into(),
                    ));
                }
            }
            ["property", _ty, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(Error::Ply(format!("unexpected header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| Error::Ply("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::Ply("vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let ts_col = col("timestamp");

    let mut points = Vec::with_capacity(count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(count));
    let mut stamps = ts_col.map(|_| Vec::with_capacity(count));
    for row in 0..count {
        let line = next_line()?.ok_or_else(|| Error::Ply(format!("missing vertex row {row}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(Error::Ply(format!(
                "row {row} has {} fields, expected {}",
                fields.len(),
                props.len()
            )));
        }
        let real = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::Ply(format!("row {row}: bad number '{}'", fields[i])))
        };
        points.push(Point3::new(real(xi)?, real(yi)?, real(zi)?));
        if let (Some(cols), Some(ns)) = (normal_cols, normals.as_mut()) {
            let v = Point3::new(real(cols[0])?, real(cols[1])?, real(cols[2])?);
            ns.push(UnitVec3::new_unchecked(v));
        }
        if let (Some(c), Some(ts)) = (ts_col, stamps.as_mut()) {
            ts.push(
                fields[c]
                    .parse::<u64>()
                    .map_err(|_| Error::Ply(format!("row {row}: bad timestamp '{}'", fields[c])))?,
            );
        }
    }
    let mut cloud = PointCloud::new(points);
    if let Some(ns) = normals {
        cloud = cloud.with_normals_tol(ns, 1e-6)?;
    }
    if let Some(ts) = stamps {
        cloud = cloud.with_timestamps(ts)?;
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let c = PointCloud::new(vec![Point3::new(1.0, -2.5, 3.0)])
            .with_normals(vec![Point3::z_axis()])
            .unwrap()
            .stamped(7);
        let s = to_string(&c);
        assert!(s.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert!(s.contains("property double nx\n"));
        assert!(s.contains("property uint timestamp\nend_header\n"));
        assert!(s.ends_with(" 7\n"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_str("nope").is_err());
        assert!(from_str("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n";
        assert!(from_str(short).is_err());
    }

    proptest! {
        #[test]
        fn text_roundtrip_is_byte_exact(
            pts in prop::collection::vec((prop::array::uniform3(-1e4f64..1e4), prop::array::uniform3(-1.0f64..1.0)), 1..30),
            with_ts in any::<bool>(),
        ) {
            let points: Vec<Point3> = pts.iter().map(|(p, _)| Point3::from(*p)).collect();
            let normals: Vec<UnitVec3> = pts
                .iter()
                .map(|(_, n)| UnitVec3::new_normalize(Point3::from(*n) + Point3::new(0.0, 0.0, 2.0)))
                .collect();
            let mut c = PointCloud::new(points).with_normals(normals).unwrap();
            if with_ts {
                let n = c.len() as u64;
                c = c.with_timestamps((0..n).collect()).unwrap();
            }
            let first = to_string(&c);
            let back = from_str(&first).unwrap();
            prop_assert_eq!(&first, &to_string(&back));
            for (a, b) in c.points().iter().zip(back.points()) {
                prop_assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0));
            }
        }
    }
}
