//! Input conversion: intensity grids and meshes to normalized XYZ clouds.

use poirot::geometry::{Point, PointCloud};
use poirot::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parses a grid of pixel intensities, one image row per line, separated by
/// whitespace or commas.
pub fn parse_image(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = vec![];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: format!("invalid intensity '{t}'"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("row has {} pixels, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("image has no rows".into()));
    }
    Ok(rows)
}

/// Pixels brighter than half the maximum, as `(col, -row, 0)`.
pub fn image_points(image: &[Vec<f64>]) -> Result<PointCloud> {
    let max = image.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut points = vec![];
    if max > 0.0 {
        for (r, row) in image.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v > 0.5 * max {
                    points.push(Point::new(c as f64, -(r as f64), 0.0));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Empty("no foreground pixels".into()));
    }
    PointCloud::new(points)
}

/// Centers on the mean and scales to unit diameter; a single point lands on the origin.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let mean = cloud.mean()?;
    let d = cloud.diameter();
    let s = if d > 0.0 { 1.0 / d } else { 1.0 };
    cloud.with_points(cloud.points().iter().map(|p| (p - mean) * s).collect())
}

/// Uniform subsample without replacement, keeping the original order.
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> PointCloud {
    if n >= cloud.len() {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), n).into_vec();
    idx.sort_unstable();
    cloud.subset(&idx)
}

/// Image grid to a cloud of at most `n` points, normalized after subsampling.
pub fn convert_image(text: &str, n: usize, seed: u64) -> Result<PointCloud> {
    let cloud = image_points(&parse_image(text)?)?;
    normalize(&subsample(&cloud, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_is_rejected() {
        let err = convert_image("0 0\n0 0\n", 256, 0).unwrap_err();
        assert!(err.to_string().contains("no foreground pixels"));
    }

    #[test]
    fn single_pixel_lands_on_the_origin() {
        let c = convert_image("0 0 0\n0 9 0\n", 1, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(*c.point(0), Point::zeros());
    }

    #[test]
    fn pixel_coordinates_and_threshold() {
        let c = image_points(&parse_image("0,10\n6,5\n").unwrap()).unwrap();
        assert_eq!(c.points(), &[Point::new(1.0, 0.0, 0.0), Point::new(0.0, -1.0, 0.0)]);
    }

    #[test]
    fn count_is_capped_and_seeded() {
        let text: String = (0..10)
            .map(|r| (0..10).map(|c| ((r * 7 + c * 3) % 5).to_string()).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        let fg = image_points(&parse_image(&text).unwrap()).unwrap().len();
        for n in [5, fg, fg + 10] {
            let a = convert_image(&text, n, 3).unwrap();
            assert_eq!(a.len(), n.min(fg));
            assert_eq!(a.points(), convert_image(&text, n, 3).unwrap().points());
            assert!((a.diameter() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ragged_rows_report_their_line() {
        match parse_image("1 2 3\n\n1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_image("1 x\n"), Err(Error::Parse { line: 1, .. })));
    }
}
