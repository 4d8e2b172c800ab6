//! ASCII PLY subset: a single `vertex` element with `x y z` and optional
//! `red green blue` (uchar).

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Point3;

pub fn to_ply_string(cloud: &PointCloud) -> String {
    let colored = cloud.colors().is_some();
    let mut s = String::with_capacity(64 + cloud.len() * 48);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if colored {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    // `{}` on f64 is the shortest representation that parses back exactly.
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = cloud.colors() {
            let [r, g, b] = c[i];
            let _ = write!(s, " {r} {g} {b}");
        }
        s.push('\n');
    }
    s
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_ply_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

type ParseResult<T> = std::result::Result<T, (usize, String)>;

/// Parses PLY text. Errors carry the 1-based line number.
pub fn parse_ply(text: &str) -> ParseResult<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let expect = |item: Option<(usize, &str)>, want: &str| -> ParseResult<usize> {
        match item {
            Some((n, l)) if l == want => Ok(n),
            Some((n, l)) => Err((n, format!("expected {want:?}, found {l:?}"))),
            None => Err((0, format!("unexpected end of file, expected {want:?}"))),
        }
    };
    expect(lines.next(), "ply")?;
    expect(lines.next(), "format ascii 1.0")?;

    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut last_line = 2;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err((last_line, "missing end_header".into()));
        };
        last_line = n;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | [] => {}
            ["element", "vertex", c] => {
                if count.is_some() {
                    return Err((n, "duplicate vertex element".into()));
                }
                count = Some(
                    c.parse()
                        .map_err(|_| (n, format!("bad vertex count {c:?}")))?,
                );
            }
            ["element", other, ..] => {
                return Err((n, format!("unsupported element {other:?}")));
            }
            ["property", ty, name] => {
                if count.is_none() {
                    return Err((n, "property before element".into()));
                }
                let ok = match *name {
                    "x" | "y" | "z" => matches!(*ty, "float" | "double" | "float32" | "float64"),
                    "red" | "green" | "blue" => matches!(*ty, "uchar" | "uint8"),
                    _ => false,
                };
                if !ok {
                    return Err((n, format!("unsupported property {ty} {name}")));
                }
                props.push(name.to_string());
            }
            _ => return Err((n, format!("malformed header line {line:?}"))),
        }
    }

    let count = count.ok_or((last_line, "no vertex element".to_string()))?;
    let colored = match props
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "red", "green", "blue"] => true,
        _ => {
            return Err((
                last_line,
                format!("vertex properties must be x y z [red green blue], got {props:?}"),
            ))
        }
    };
    let width = if colored { 6 } else { 3 };

    let mut points = Vec::with_capacity(count);
    let mut colors = colored.then(|| Vec::with_capacity(count));
    for (n, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        if points.len() == count {
            return Err((n, format!("more than {count} vertices")));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width {
            return Err((
                n,
                format!("expected {width} values, found {}", fields.len()),
            ));
        }
        let mut xyz = [0.0f64; 3];
        for k in 0..3 {
            let v: f64 = fields[k]
                .parse()
                .map_err(|_| (n, format!("bad coordinate {:?}", fields[k])))?;
            if !v.is_finite() {
                return Err((n, format!("non-finite coordinate {:?}", fields[k])));
            }
            xyz[k] = v;
        }
        points.push(Point3::from(xyz));
        if let Some(cs) = colors.as_mut() {
            let mut rgb = [0u8; 3];
            for k in 0..3 {
                rgb[k] = fields[3 + k]
                    .parse()
                    .map_err(|_| (n, format!("bad color value {:?}", fields[3 + k])))?;
            }
            cs.push(rgb);
        }
        last_line = n;
    }
    if points.len() != count {
        return Err((
            last_line,
            format!("header declares {count} vertices, found {}", points.len()),
        ));
    }
    Ok(PointCloud::from_trusted(points, colors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_cloud_round_trip() {
        let text = to_ply_string(&PointCloud::empty());
        assert!(text.contains("element vertex 0"));
        assert!(parse_ply(&text).unwrap().is_empty());
    }

    #[test]
    fn colored_point_round_trip() {
        let c =
            PointCloud::with_colors(vec![Point3::new(1.0, 2.0, 3.0)], vec![[255, 0, 0]]).unwrap();
        assert_eq!(parse_ply(&to_ply_string(&c)).unwrap(), c);
    }

    #[test]
    fn random_cloud_round_trips_through_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..10_000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-1e-3..1e-3),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        save_cloud(&cloud, &path).unwrap();
        let back = load_cloud(&path).unwrap();
        assert_eq!(back.len(), cloud.len());
        for (a, b) in cloud.points().iter().zip(back.points()) {
            assert!((a - b).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn errors_name_the_line() {
        let bad_count = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        let (line, msg) = parse_ply(bad_count).unwrap_err();
        assert_eq!(line, 8);
        assert!(msg.contains("declares 2"));

        let nan = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 nan 3\n";
        assert_eq!(parse_ply(nan).unwrap_err().0, 8);

        let face = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nelement face 0\nend_header\n";
        assert_eq!(parse_ply(face).unwrap_err().0, 7);

        let binary = "ply\nformat binary_little_endian 1.0\n";
        assert_eq!(parse_ply(binary).unwrap_err().0, 2);

        let extra = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 5 6\n";
        assert_eq!(parse_ply(extra).unwrap_err().0, 9);
    }

    #[test]
    fn load_reports_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex x\n").unwrap();
        let err = load_cloud(&path).unwrap_err().to_string();
        assert!(err.contains("bad.ply:3"), "{err}");
    }
}
