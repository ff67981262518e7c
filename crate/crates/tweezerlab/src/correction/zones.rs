//! Rectangular zone partitions of the modulator for interference probing.

use std::ops::Range;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::optics::MaskGeometry;

/// A rows x cols rectangular tiling of the mask into `zone_count` zones,
/// with one zone designated as the phase reference.
///
/// Zone ids run row-major over the zone grid. Every pixel belongs to
/// exactly one zone and every zone is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    geometry: MaskGeometry,
    grid_rows: usize,
    grid_cols: usize,
    row_bounds: Vec<usize>,
    col_bounds: Vec<usize>,
    reference: usize,
}

/// Splits the mask into `n` zones on the divisor-pair grid whose aspect
/// ratio is closest to the mask's, and picks the most-central zone as the
/// reference.
pub fn partition_zones(geometry: MaskGeometry, n: usize) -> Result<ZonePartition> {
    let pixels = geometry.height_px * geometry.width_px;
    if n == 0 {
        return Err(Error::ScenarioValue {
            field: "n_zones".into(),
            reason: "zone count must be at least 1".into(),
        });
    }
    if n > pixels {
        return Err(Error::TooManyZones { zones: n, pixels });
    }

    // Divisor pair rows*cols = n minimizing |ln(rows/cols) - ln(H/W)|,
    // restricted to pairs where every zone gets at least one pixel.
    let target = (geometry.height_px as f64 / geometry.width_px as f64).ln();
    let mut best: Option<(f64, usize, usize)> = None;
    for rows in 1..=n {
        if n % rows != 0 {
            continue;
        }
        let cols = n / rows;
        if rows > geometry.height_px || cols > geometry.width_px {
            continue;
        }
        let badness = ((rows as f64 / cols as f64).ln() - target).abs();
        if best.map_or(true, |(b, _, _)| badness < b) {
            best = Some((badness, rows, cols));
        }
    }
    let Some((_, grid_rows, grid_cols)) = best else {
        return Err(Error::ScenarioValue {
            field: "n_zones".into(),
            reason: format!(
                "no rows x cols factorization of {n} fits a {}x{} mask",
                geometry.height_px, geometry.width_px
            ),
        });
    };

    // Even splits without accumulating remainder drift.
    let row_bounds: Vec<usize> = (0..=grid_rows)
        .map(|i| i * geometry.height_px / grid_rows)
        .collect();
    let col_bounds: Vec<usize> = (0..=grid_cols)
        .map(|i| i * geometry.width_px / grid_cols)
        .collect();

    let mut part = ZonePartition {
        geometry,
        grid_rows,
        grid_cols,
        row_bounds,
        col_bounds,
        reference: 0,
    };
    part.reference = part.most_central_zone();
    Ok(part)
}

impl ZonePartition {
    pub fn geometry(&self) -> MaskGeometry {
        self.geometry
    }

    pub fn zone_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Shape of the zone grid as (rows, cols).
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn reference_zone(&self) -> usize {
        self.reference
    }

    /// Pixel rectangle of a zone as (row range, column range).
    pub fn zone_rect(&self, zone: usize) -> Result<(Range<usize>, Range<usize>)> {
        if zone >= self.zone_count() {
            return Err(Error::InvalidZone {
                zone,
                reason: format!("only {} zones exist", self.zone_count()),
            });
        }
        let gr = zone / self.grid_cols;
        let gc = zone % self.grid_cols;
        Ok((
            self.row_bounds[gr]..self.row_bounds[gr + 1],
            self.col_bounds[gc]..self.col_bounds[gc + 1],
        ))
    }

    /// Zone id owning a pixel.
    pub fn zone_of_pixel(&self, row: usize, col: usize) -> usize {
        // bounds[g] <= pixel < bounds[g+1]; an exact hit on a bound starts
        // the next zone.
        let locate = |bounds: &[usize], px: usize, parts: usize| -> usize {
            match bounds.binary_search(&px) {
                Ok(i) => i,
                Err(i) => i - 1,
            }
            .min(parts - 1)
        };
        let gr = locate(&self.row_bounds, row, self.grid_rows);
        let gc = locate(&self.col_bounds, col, self.grid_cols);
        gr * self.grid_cols + gc
    }

    /// Zone-id raster aligned to the mask.
    pub fn zone_map(&self) -> Array2<usize> {
        Array2::from_shape_fn((self.geometry.height_px, self.geometry.width_px), |(r, c)| {
            self.zone_of_pixel(r, c)
        })
    }

    /// Physical (y, z) center of a zone's pixel rectangle.
    pub fn zone_center(&self, zone: usize) -> Result<(f64, f64)> {
        let (rows, cols) = self.zone_rect(zone)?;
        let y = 0.5 * (self.geometry.y_of_col(cols.start) + self.geometry.y_of_col(cols.end - 1));
        let z = 0.5 * (self.geometry.z_of_row(rows.start) + self.geometry.z_of_row(rows.end - 1));
        Ok((y, z))
    }

    fn most_central_zone(&self) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for zone in 0..self.zone_count() {
            let (y, z) = self.zone_center(zone).expect("zone id in range");
            let d = y.hypot(z);
            if d < best_d {
                best_d = d;
                best = zone;
            }
        }
        best
    }

    /// Non-reference zones ordered in an outward spiral from the reference:
    /// by Chebyshev ring on the zone grid, then by angle, then by id.
    /// Deterministic, so probe sequences are reproducible.
    pub fn visit_order(&self) -> Vec<usize> {
        let rr = (self.reference / self.grid_cols) as i64;
        let rc = (self.reference % self.grid_cols) as i64;
        let mut order: Vec<usize> = (0..self.zone_count())
            .filter(|&z| z != self.reference)
            .collect();
        order.sort_by(|&a, &b| {
            let key = |z: usize| {
                let dr = (z / self.grid_cols) as i64 - rr;
                let dc = (z % self.grid_cols) as i64 - rc;
                let ring = dr.abs().max(dc.abs());
                let angle = (dr as f64).atan2(dc as f64);
                (ring, angle, z)
            };
            let (ra, aa, ia) = key(a);
            let (rb, ab, ib) = key(b);
            ra.cmp(&rb).then(aa.total_cmp(&ab)).then(ia.cmp(&ib))
        });
        order
    }
}
