use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};

pub type Rgb = [u8; 3];

/// An ordered set of points, optionally colored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
    source_frame: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self {
            points,
            colors: None,
            source_frame: None,
        })
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<Rgb>) -> Result<Self> {
        check_finite(&points)?;
        if colors.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            colors: Some(colors),
            source_frame: None,
        })
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_trusted(points: Vec<Point3>, colors: Option<Vec<Rgb>>) -> Self {
        debug_assert!(colors.as_ref().is_none_or(|c| c.len() == points.len()));
        Self {
            points,
            colors,
            source_frame: None,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_source_frame(mut self, id: impl Into<String>) -> Self {
        self.source_frame = Some(id.into());
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn source_frame(&self) -> Option<&str> {
        self.source_frame.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Subset in the order of `indices`.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let colors = self
            .colors
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        PointCloud {
            points,
            colors,
            source_frame: self.source_frame.clone(),
        }
    }

    /// Keeps points whose mask entry is `true`, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> PointCloud {
        let indices: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        self.select(&indices)
    }

    /// Concatenates clouds. Colors survive only if every part has them.
    pub fn concat(parts: &[PointCloud]) -> PointCloud {
        let total = parts.iter().map(|c| c.len()).sum();
        let mut points = Vec::with_capacity(total);
        let all_colored = !parts.is_empty() && parts.iter().all(|c| c.colors.is_some());
        let mut colors = all_colored.then(|| Vec::with_capacity(total));
        for part in parts {
            points.extend_from_slice(&part.points);
            if let (Some(out), Some(c)) = (colors.as_mut(), part.colors.as_ref()) {
                out.extend_from_slice(c);
            }
        }
        PointCloud::from_trusted(points, colors)
    }

    /// Axis-aligned bounds, `None` when empty.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        aabb(&self.points)
    }
}

pub(crate) fn aabb(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in &points[1..] {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

fn check_finite(points: &[Point3]) -> Result<()> {
    match points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        Some(i) => Err(Error::invalid(format!("point {i} is not finite"))),
        None => Ok(()),
    }
}

/// Maps every point through `pose`; colors and ordering are kept.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let points = cloud.points.iter().map(|p| pose.apply(p)).collect();
    PointCloud {
        points,
        colors: cloud.colors.clone(),
        source_frame: cloud.source_frame.clone(),
    }
}
